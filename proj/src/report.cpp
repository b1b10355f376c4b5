#include "aliaug/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace aliaug {

namespace {

const char* kStrategies[] = {"D_S", "D_S_AUG", "CAS", "NAS"};

ImageBuf hflip(const ImageBuf& img) {
    ImageBuf out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
    return out;
}

MaskBuf hflip(const MaskBuf& m) {
    MaskBuf out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) out.at(y, x) = m.at(y, m.w - 1 - x);
    return out;
}

ImageBuf rot90(const ImageBuf& img) {
    ImageBuf out(img.w, img.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, img.h - 1 - y, c) = img.at(y, x, c);
    return out;
}

MaskBuf rot90(const MaskBuf& m) {
    MaskBuf out(m.w, m.h);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) out.at(x, m.h - 1 - y) = m.at(y, x);
    return out;
}

template <typename T>
T rotated(T v, int k) {
    for (int i = 0; i < k; ++i) v = rot90(v);
    return v;
}

real median(std::vector<real> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

SampleRecord rerooted(const DatasetManifest& m, const SampleRecord& rec) {
    SampleRecord r = rec;
    // Absolute so the record stays valid inside a manifest rooted elsewhere.
    auto abs = [&](std::string& p) {
        if (!p.empty()) p = fs::absolute(m.resolve(p)).string();
    };
    abs(r.input_path);
    abs(r.mask_path);
    abs(r.target_path);
    return r;
}

std::string fmt(real v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    return buf;
}

}  // namespace

DatasetManifest augment_dataset(const DatasetManifest& train, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    DatasetManifest out;
    out.dir = out_dir;
    out.split = train.split;
    out.seed = train.seed;
    const struct {
        const char* tag;
        bool flip;
        int rot;
    } variants[] = {{"hf", true, 0}, {"r90", false, 1}, {"r270", false, 3}};

    for (const auto& rec : train.records) {
        out.records.push_back(rerooted(train, rec));
        LoadedSample s = load_sample(train, rec);
        for (const auto& var : variants) {
            ImageBuf img = s.target ? *s.target : *s.input;
            MaskBuf mask = s.mask;
            if (var.flip) {
                img = hflip(img);
                mask = hflip(mask);
            }
            img = rotated(img, var.rot);
            mask = rotated(mask, var.rot);

            SampleRecord r;
            r.id = rec.id + "_" + var.tag;
            r.mask_path = "masks/" + r.id + ".png";
            r.target_path = "images/" + r.id + ".png";
            r.prompt = rec.prompt;
            r.label = rec.label;
            r.pairing = Pairing::mask_only;
            r.provenance = rec.provenance.empty() ? "real" : rec.provenance;
            save_image_png(out.resolve(r.target_path), img);
            save_mask_png(out.resolve(r.mask_path), mask);
            out.records.push_back(std::move(r));
        }
    }
    return out;
}

EvalReport run_report(const DatasetManifest& real_data, const GeneratorModel& gen,
                      const std::vector<uint64_t>& seeds, int n_per_record,
                      const std::string& work_dir, real train_fraction, uint64_t split_seed) {
    if (seeds.empty()) throw std::runtime_error("run_report needs at least one seed");
    auto [train, test] = split_dataset(real_data, train_fraction, split_seed);

    BuildResult cas = build_cas(train, gen, n_per_record, (fs::path(work_dir) / "cas").string(),
                                split_seed);
    BuildResult nas = build_nas(train, gen, n_per_record, (fs::path(work_dir) / "nas").string(),
                                split_seed);
    DatasetManifest aug = augment_dataset(train, (fs::path(work_dir) / "aug").string());

    EvalReport report;
    report.seeds = seeds;

    FeatureExtractor ext;
    ext.init();
    report.fid = compute_fid(train, cas.manifest, ext).fid;

    const std::pair<std::string, const DatasetManifest*> strategies[] = {
        {"D_S", &train}, {"D_S_AUG", &aug}, {"CAS", &cas.manifest}, {"NAS", &nas.manifest}};
    for (const auto& [name, manifest] : strategies) {
        std::vector<real> prec, rec, acc, iou;
        for (uint64_t seed : seeds) {
            DownstreamModel model = train_downstream(*manifest, seed);
            DownstreamMetrics m = eval_downstream(model, test);
            prec.push_back(m.precision);
            rec.push_back(m.recall);
            acc.push_back(m.accuracy);
            iou.push_back(m.iou);
        }
        DownstreamMetrics med;
        med.precision = median(prec);
        med.recall = median(rec);
        med.accuracy = median(acc);
        med.iou = median(iou);
        med.n = static_cast<long>(test.records.size());
        report.per_strategy[name] = med;
    }
    return report;
}

std::string serialize_report(const EvalReport& r) {
    std::ostringstream os;
    os << "fid=" << fmt(r.fid) << "\n";
    os << "seeds=";
    for (size_t i = 0; i < r.seeds.size(); ++i) os << (i ? "," : "") << r.seeds[i];
    os << "\n";
    for (const char* name : kStrategies) {
        auto it = r.per_strategy.find(name);
        if (it == r.per_strategy.end()) continue;
        const auto& m = it->second;
        os << name << ".precision=" << fmt(m.precision) << "\n";
        os << name << ".recall=" << fmt(m.recall) << "\n";
        os << name << ".accuracy=" << fmt(m.accuracy) << "\n";
        os << name << ".iou=" << fmt(m.iou) << "\n";
    }
    return os.str();
}

EvalReport parse_report(const std::string& text) {
    EvalReport r;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad report line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "fid") {
            r.fid = static_cast<real>(std::stod(val));
        } else if (key == "seeds") {
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ','))
                if (!tok.empty()) r.seeds.push_back(std::stoull(tok));
        } else {
            auto dot = key.find('.');
            if (dot == std::string::npos) throw std::runtime_error("bad report key: " + key);
            auto& m = r.per_strategy[key.substr(0, dot)];
            const std::string metric = key.substr(dot + 1);
            const real v = static_cast<real>(std::stod(val));
            if (metric == "precision") m.precision = v;
            else if (metric == "recall") m.recall = v;
            else if (metric == "accuracy") m.accuracy = v;
            else if (metric == "iou") m.iou = v;
            else throw std::runtime_error("bad report metric: " + metric);
        }
    }
    return r;
}

std::string format_table(const EvalReport& r) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s", "metric");
    os << buf;
    for (const char* name : kStrategies) {
        std::snprintf(buf, sizeof buf, " %10s", name);
        os << buf;
    }
    os << "\n";
    const std::pair<const char*, real DownstreamMetrics::*> rows[] = {
        {"precision", &DownstreamMetrics::precision},
        {"recall", &DownstreamMetrics::recall},
        {"accuracy", &DownstreamMetrics::accuracy},
        {"iou", &DownstreamMetrics::iou}};
    for (const auto& [label, field] : rows) {
        std::snprintf(buf, sizeof buf, "%-10s", label);
        os << buf;
        for (const char* name : kStrategies) {
            auto it = r.per_strategy.find(name);
            if (it == r.per_strategy.end()) {
                std::snprintf(buf, sizeof buf, " %10s", "-");
            } else {
                std::snprintf(buf, sizeof buf, " %10.3f", static_cast<double>(it->second.*field));
            }
            os << buf;
        }
        os << "\n";
    }
    std::snprintf(buf, sizeof buf, "fid %.6f\n", static_cast<double>(r.fid));
    os << buf;
    return os.str();
}

}  // namespace aliaug
