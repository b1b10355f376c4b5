#include "aliaug/manifest.hpp"

#include "aliaug/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace aliaug {

std::string pairing_name(Pairing p) {
    switch (p) {
        case Pairing::paired: return "paired";
        case Pairing::unpaired: return "unpaired";
        case Pairing::mask_only: return "mask_only";
    }
    return "?";
}

Pairing pairing_from_name(const std::string& s) {
    if (s == "paired") return Pairing::paired;
    if (s == "unpaired") return Pairing::unpaired;
    if (s == "mask_only") return Pairing::mask_only;
    throw std::runtime_error("unknown pairing mode: " + s);
}

std::string DatasetManifest::resolve(const std::string& rel) const {
    if (rel.empty()) return rel;
    fs::path p(rel);
    if (p.is_absolute()) return rel;
    return (fs::path(dir) / p).string();
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest: " + path);
    DatasetManifest m;
    m.dir = fs::path(path).parent_path().string();
    std::string line;
    int lineno = 0;
    std::set<std::string> seen_ids;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("malformed manifest line " + std::to_string(lineno) + " in " +
                                     path + ": " + e.what());
        }
        SampleRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.input_path = j.value("input", "");
            rec.mask_path = j.at("mask").get<std::string>();
            rec.target_path = j.value("target", "");
            rec.prompt = j.at("prompt").get<std::string>();
            rec.label = j.at("label").get<std::string>();
            rec.pairing = pairing_from_name(j.at("pairing").get<std::string>());
            rec.provenance = j.value("provenance", "");
        } catch (const std::exception& e) {
            throw std::runtime_error("malformed manifest line " + std::to_string(lineno) + " in " +
                                     path + ": " + e.what());
        }
        if (!seen_ids.insert(rec.id).second)
            throw std::runtime_error("duplicate record id '" + rec.id + "' at line " +
                                     std::to_string(lineno));
        for (const std::string* p : {&rec.input_path, &rec.mask_path, &rec.target_path}) {
            if (!p->empty() && !fs::exists(m.resolve(*p)))
                throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                         ": missing referenced file " + m.resolve(*p));
        }
        m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw std::runtime_error("empty manifest: " + path);
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& rec : m.records) {
        json j;
        j["id"] = rec.id;
        if (!rec.input_path.empty()) j["input"] = rec.input_path;
        j["mask"] = rec.mask_path;
        if (!rec.target_path.empty()) j["target"] = rec.target_path;
        j["prompt"] = rec.prompt;
        j["label"] = rec.label;
        j["pairing"] = pairing_name(rec.pairing);
        if (!rec.provenance.empty()) j["provenance"] = rec.provenance;
        f << j.dump() << "\n";
    }
}

LoadedSample load_sample(const DatasetManifest& m, const SampleRecord& rec) {
    LoadedSample s;
    if (!rec.input_path.empty()) s.input = load_image_png(m.resolve(rec.input_path));
    s.mask = load_mask_png(m.resolve(rec.mask_path));
    if (!rec.target_path.empty()) s.target = load_image_png(m.resolve(rec.target_path));
    s.prompt = rec.prompt;
    s.label = rec.label;
    s.pairing = rec.pairing;
    return s;
}

std::optional<std::string> validate_record(const LoadedSample& s) {
    if (s.pairing == Pairing::paired && (!s.input || !s.target))
        return "paired requires target and input";
    if (s.pairing == Pairing::unpaired && !s.target) return "unpaired requires target";
    if (s.pairing == Pairing::mask_only && s.input) return "mask_only forbids input image";
    if (s.prompt.empty()) return "prompt must be nonempty";
    if (auto err = check_mask(s.mask, /*allow_empty=*/s.label == "good")) return err;
    for (const auto* img : {&s.input, &s.target}) {
        if (!img->has_value()) continue;
        if (auto err = check_image(**img)) return err;
        if ((*img)->h != s.mask.h || (*img)->w != s.mask.w)
            return "image/mask shape mismatch";
    }
    if (s.input && s.target && (s.input->h != s.target->h || s.input->w != s.target->w))
        return "input/target shape mismatch";
    return std::nullopt;
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& m,
                                                          real train_fraction, uint64_t seed) {
    if (m.records.empty()) throw std::runtime_error("cannot split an empty manifest");
    if (!(train_fraction > 0 && train_fraction < 1))
        throw std::runtime_error("train_fraction must be in (0,1)");

    const int n = static_cast<int>(m.records.size());
    const int n_train = static_cast<int>(std::lround(train_fraction * n));

    // Group by label; single-class degenerates to a plain shuffle split.
    std::map<std::string, std::vector<int>> by_label;
    for (int i = 0; i < n; ++i) by_label[m.records[i].label].push_back(i);

    Rng rng(seed);
    std::vector<int> train_idx, test_idx;
    if (by_label.size() < 2) {
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        train_idx.assign(order.begin(), order.begin() + n_train);
        test_idx.assign(order.begin() + n_train, order.end());
    } else {
        // Per-class floor quota, then largest fractional remainders fill up
        // to the exact global train count.
        struct ClassPlan {
            std::vector<int> order;
            int quota;
            real frac;
        };
        std::vector<ClassPlan> plans;
        int assigned = 0;
        for (auto& [label, idx] : by_label) {
            ClassPlan p;
            p.order = idx;
            for (int i = static_cast<int>(p.order.size()) - 1; i > 0; --i)
                std::swap(p.order[i], p.order[rng.below(i + 1)]);
            const real want = train_fraction * static_cast<real>(idx.size());
            p.quota = static_cast<int>(std::floor(want));
            p.frac = want - p.quota;
            assigned += p.quota;
            plans.push_back(std::move(p));
        }
        std::vector<int> by_frac(plans.size());
        for (size_t i = 0; i < plans.size(); ++i) by_frac[i] = static_cast<int>(i);
        std::stable_sort(by_frac.begin(), by_frac.end(),
                         [&](int a, int b) { return plans[a].frac > plans[b].frac; });
        for (int i = 0; assigned < n_train && i < static_cast<int>(by_frac.size()); ++i) {
            auto& p = plans[by_frac[i]];
            if (p.quota < static_cast<int>(p.order.size())) {
                ++p.quota;
                ++assigned;
            }
        }
        // If rounding still falls short (tiny classes), top up greedily.
        for (auto& p : plans) {
            while (assigned < n_train && p.quota < static_cast<int>(p.order.size())) {
                ++p.quota;
                ++assigned;
            }
        }
        for (const auto& p : plans) {
            for (int i = 0; i < static_cast<int>(p.order.size()); ++i)
                (i < p.quota ? train_idx : test_idx).push_back(p.order[i]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    DatasetManifest train, test;
    train.split = DatasetManifest::Split::train;
    test.split = DatasetManifest::Split::test;
    train.seed = test.seed = seed;
    train.dir = test.dir = m.dir;
    for (int i : train_idx) train.records.push_back(m.records[i]);
    for (int i : test_idx) test.records.push_back(m.records[i]);
    return {train, test};
}

std::vector<SampleRecord> make_unpaired_pairs(const std::vector<SampleRecord>& defect_records,
                                              const std::vector<std::string>& clean_images,
                                              uint64_t seed) {
    if (defect_records.empty()) throw std::runtime_error("no defect records to pair");
    if (clean_images.empty()) throw std::runtime_error("no clean images to draw from");
    Rng rng(seed);
    std::vector<SampleRecord> out;
    out.reserve(defect_records.size());
    for (const auto& rec : defect_records) {
        SampleRecord u = rec;
        u.input_path = clean_images[rng.below(clean_images.size())];
        u.pairing = Pairing::unpaired;
        out.push_back(std::move(u));
    }
    return out;
}

std::pair<ImageBuf, MaskBuf> basic_augment(const ImageBuf& image, const MaskBuf& mask,
                                           uint64_t seed) {
    ImageBuf img = image;
    MaskBuf msk = mask;
    Rng rng(seed);

    if (rng.bernoulli(0.5)) {  // horizontal flip, joint
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w / 2; ++x) {
                for (int c = 0; c < 3; ++c) std::swap(img.at(y, x, c), img.at(y, img.w - 1 - x, c));
                std::swap(msk.at(y, x), msk.at(y, img.w - 1 - x));
            }
    }

    const int k = static_cast<int>(rng.below(4));  // k*90 degrees, joint
    for (int r = 0; r < k; ++r) {
        ImageBuf ri(img.w, img.h);
        MaskBuf rm(msk.w, msk.h);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                for (int c = 0; c < 3; ++c) ri.at(x, img.h - 1 - y, c) = img.at(y, x, c);
                rm.at(x, img.h - 1 - y) = msk.at(y, x);
            }
        img = std::move(ri);
        msk = std::move(rm);
    }

    if (rng.bernoulli(0.5)) {  // brightness/contrast jitter, image only
        const real brightness = rng.uniform(-0.1, 0.1);
        const real contrast = rng.uniform(0.9, 1.1);
        for (auto& v : img.px)
            v = std::clamp(contrast * (v - real(0.5)) + real(0.5) + brightness, real(0), real(1));
    }
    return {img, msk};
}

std::pair<DatasetManifest, DatasetManifest> import_mvtec(const std::string& category_dir,
                                                         const std::string& out_dir,
                                                         int image_size) {
    const fs::path root(category_dir);
    if (!fs::exists(root / "test") || !fs::exists(root / "ground_truth"))
        throw std::runtime_error("not an MVTec-layout directory: " + category_dir);
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    DatasetManifest defects, good;
    defects.dir = good.dir = out_dir;

    auto emit_image = [&](const fs::path& src, const std::string& name) {
        ImageBuf img = resized_crop(load_image_png(src.string()), image_size);
        const std::string rel = "images/" + name + ".png";
        save_image_png((fs::path(out_dir) / rel).string(), img);
        return rel;
    };
    auto emit_mask = [&](const fs::path& src, const std::string& name) {
        MaskBuf m = load_mask_png(src.string());
        // Nearest-neighbor resize keeps the mask binary.
        MaskBuf r(image_size, image_size);
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x)
                r.at(y, x) = m.at(std::min(m.h - 1, y * m.h / image_size),
                                  std::min(m.w - 1, x * m.w / image_size));
        const std::string rel = "masks/" + name + ".png";
        save_mask_png((fs::path(out_dir) / rel).string(), r);
        return rel;
    };
    auto emit_zero_mask = [&](const std::string& name) {
        MaskBuf z(image_size, image_size);
        const std::string rel = "masks/" + name + ".png";
        save_mask_png((fs::path(out_dir) / rel).string(), z);
        return rel;
    };

    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(root / "test"))
        if (e.is_directory()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& defect_dir : entries) {
        const std::string defect = defect_dir.filename().string();
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(defect_dir)) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::string stem = f.stem().string();
            const std::string name = defect + "_" + stem;
            if (defect == "good") {
                SampleRecord rec;
                rec.id = "good_" + stem;
                rec.target_path = emit_image(f, rec.id);
                rec.mask_path = emit_zero_mask(rec.id);
                rec.prompt = "no defect";
                rec.label = "good";
                rec.pairing = Pairing::unpaired;
                good.records.push_back(std::move(rec));
                continue;
            }
            const fs::path gt = root / "ground_truth" / defect / (stem + "_mask.png");
            if (!fs::exists(gt))
                throw std::runtime_error("missing ground-truth mask: " + gt.string());
            SampleRecord rec;
            rec.id = name;
            rec.target_path = emit_image(f, name);
            rec.mask_path = emit_mask(gt, name);
            rec.prompt = "add " + defect;
            rec.label = defect;
            rec.pairing = Pairing::mask_only;
            defects.records.push_back(std::move(rec));
        }
    }
    // train/good images feed the clean pool.
    if (fs::exists(root / "train" / "good")) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(root / "train" / "good"))
            files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            SampleRecord rec;
            rec.id = "train_good_" + f.stem().string();
            rec.target_path = emit_image(f, rec.id);
            rec.mask_path = emit_zero_mask(rec.id);
            rec.prompt = "no defect";
            rec.label = "good";
            rec.pairing = Pairing::unpaired;
            good.records.push_back(std::move(rec));
        }
    }
    return {defects, good};
}

}  // namespace aliaug
