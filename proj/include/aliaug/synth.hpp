#pragma once

#include "aliaug/manifest.hpp"
#include "aliaug/rng.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace aliaug {

enum class DefectKind { scratch, hole, color_blob, glue_strip };
enum class TextureFamily { wood_grain, tile, plain };

std::string defect_kind_name(DefectKind k);
std::string texture_family_name(TextureFamily f);
TextureFamily texture_family_from_name(const std::string& s);

// Geometry fields are interpreted per kind:
//   scratch:    segment (x0,y0)-(x1,y1), thickness `width`
//   hole:       disc center (x0,y0), radius `width`
//   color_blob: lobed blob around (x0,y0), base radius `width`, lobe layout
//               derived from `blob_seed`
//   glue_strip: axis-aligned rectangle [x0,x1] x [y0,y1]
struct DefectSpec {
    DefectKind kind = DefectKind::scratch;
    real x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    real width = 2;
    uint64_t blob_seed = 0;
    real intensity = real(0.5);  // in [0,1]
};

struct CorpusConfig {
    int image_size = 64;
    int count_good = 10;
    std::map<DefectKind, int> counts;  // per defect kind
    TextureFamily family = TextureFamily::wood_grain;
    uint64_t seed = 0;
};

// Fixed closed prompt vocabulary; index = prompt_id.
const std::vector<std::string>& prompt_vocabulary();
std::string defect_prompt(DefectKind k);

// Deterministic textured background, values in [0.25, 0.80] so defect
// contrast stays above the 0.1 floor after blending.
ImageBuf generate_texture(TextureFamily family, int size, uint64_t seed);

// Renders the defect into a copy of the image. The returned mask is the exact
// support of the alteration; pixels outside it are bitwise untouched, and the
// mean absolute change inside is >= 0.1.
std::pair<ImageBuf, MaskBuf> inject_defect(const ImageBuf& image, const DefectSpec& spec);

// Seeded random in-bounds spec for one defect instance.
DefectSpec random_defect_spec(DefectKind kind, int size, Rng& rng);

struct Corpus {
    DatasetManifest paired;
    DatasetManifest unpaired;
    DatasetManifest good;
};

// Writes PNGs plus paired/unpaired/good manifests (and prompts.txt) under
// out_dir. Pure function of the config.
Corpus build_corpus(const CorpusConfig& config, const std::string& out_dir);

}  // namespace aliaug
