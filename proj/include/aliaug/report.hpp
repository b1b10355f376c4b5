#pragma once

#include "aliaug/evaluation.hpp"

#include <map>
#include <string>
#include <vector>

namespace aliaug {

// Full-protocol comparison: one downstream model per training strategy,
// all validated on the same held-out real split.
//   D_S     — real train records only
//   D_S_AUG — real train records plus flip/rotate copies
//   CAS     — synthetic records only
//   NAS     — real train records plus the CAS synthetic records
struct EvalReport {
    real fid = -1;  // synthetic CAS set vs the real train set
    std::vector<uint64_t> seeds;
    std::map<std::string, DownstreamMetrics> per_strategy;
};

// Flip/rotate-only expansion of a manifest: each record plus three geometric
// copies (hflip, 90deg, 270deg) written under out_dir.
DatasetManifest augment_dataset(const DatasetManifest& train, const std::string& out_dir);

// Runs the whole comparison: 70/30 split, strategy dataset assembly,
// per-seed downstream training, seed-median metrics, and the CAS-set FID.
EvalReport run_report(const DatasetManifest& real_data, const GeneratorModel& gen,
                      const std::vector<uint64_t>& seeds, int n_per_record,
                      const std::string& work_dir, real train_fraction = real(0.7),
                      uint64_t split_seed = 42);

// Line-delimited key=value form and its inverse.
std::string serialize_report(const EvalReport& r);
EvalReport parse_report(const std::string& text);

// Human-readable table: metric rows by strategy columns.
std::string format_table(const EvalReport& r);

}  // namespace aliaug
