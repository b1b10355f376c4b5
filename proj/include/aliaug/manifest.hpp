#pragma once

#include "aliaug/image.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aliaug {

enum class Pairing { paired, unpaired, mask_only };

std::string pairing_name(Pairing p);
Pairing pairing_from_name(const std::string& s);

// One training/eval unit. Image fields hold paths relative to the manifest
// directory; empty string means absent.
struct SampleRecord {
    std::string id;
    std::string input_path;
    std::string mask_path;
    std::string target_path;
    std::string prompt;
    std::string label;
    Pairing pairing = Pairing::paired;
    std::string provenance;  // optional: "real" / "synthetic"
};

struct DatasetManifest {
    enum class Split { train, test, unsplit };

    std::vector<SampleRecord> records;
    Split split = Split::unsplit;
    uint64_t seed = 0;
    std::string dir;  // base directory for relative paths

    std::string resolve(const std::string& rel) const;
};

// Fully loaded record, the unit validate_record operates on.
struct LoadedSample {
    std::optional<ImageBuf> input;
    MaskBuf mask;
    std::optional<ImageBuf> target;
    std::string prompt;
    std::string label;
    Pairing pairing = Pairing::paired;
};

// Manifest file format: UTF-8, one JSON object per line with keys
// {id, input, mask, target, prompt, label, pairing} (+ optional provenance).
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

LoadedSample load_sample(const DatasetManifest& m, const SampleRecord& rec);

// Returns the first violated invariant, or nullopt when the record is valid.
std::optional<std::string> validate_record(const LoadedSample& s);

// Deterministic stratified split: |train| = round(train_fraction * N),
// disjoint and exhaustive, stratified by label when >= 2 classes are present.
std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& m,
                                                          real train_fraction, uint64_t seed);

// Re-pairs defect records with randomly chosen clean inputs (same-domain,
// different object). Masks and targets are kept untouched.
std::vector<SampleRecord> make_unpaired_pairs(const std::vector<SampleRecord>& defect_records,
                                              const std::vector<std::string>& clean_images,
                                              uint64_t seed);

// Classical augmentation: seeded subset of {hflip, k*90 rotation, brightness/
// contrast jitter within +/-10%}. Geometric ops hit image and mask jointly;
// jitter never touches the mask.
std::pair<ImageBuf, MaskBuf> basic_augment(const ImageBuf& image, const MaskBuf& mask,
                                           uint64_t seed);

// MVTec-layout importer: <root>/<category>/{train/good, test/<defect>,
// ground_truth/<defect>}. Writes resized images/masks under out_dir and
// returns (defect manifest, good manifest). Defect records carry the test
// image as target with its ground-truth mask; good records get all-zero masks.
std::pair<DatasetManifest, DatasetManifest> import_mvtec(const std::string& category_dir,
                                                         const std::string& out_dir,
                                                         int image_size = 64);

}  // namespace aliaug
