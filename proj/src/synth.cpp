#include "aliaug/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace aliaug {

std::string defect_kind_name(DefectKind k) {
    switch (k) {
        case DefectKind::scratch: return "scratch";
        case DefectKind::hole: return "hole";
        case DefectKind::color_blob: return "color_blob";
        case DefectKind::glue_strip: return "glue_strip";
    }
    return "?";
}

std::string texture_family_name(TextureFamily f) {
    switch (f) {
        case TextureFamily::wood_grain: return "wood_grain";
        case TextureFamily::tile: return "tile";
        case TextureFamily::plain: return "plain";
    }
    return "?";
}

TextureFamily texture_family_from_name(const std::string& s) {
    if (s == "wood_grain") return TextureFamily::wood_grain;
    if (s == "tile") return TextureFamily::tile;
    if (s == "plain") return TextureFamily::plain;
    throw std::runtime_error("unsupported texture family: " + s);
}

const std::vector<std::string>& prompt_vocabulary() {
    static const std::vector<std::string> vocab = {
        "add scratch", "add hole", "add color_blob", "add glue_strip", "no defect",
    };
    return vocab;
}

std::string defect_prompt(DefectKind k) { return "add " + defect_kind_name(k); }

namespace {
constexpr real kTexLo = real(0.25);
constexpr real kTexHi = real(0.80);

real clamp_tex(real v) { return std::clamp(v, kTexLo, kTexHi); }
}  // namespace

ImageBuf generate_texture(TextureFamily family, int size, uint64_t seed) {
    if (size % 8 != 0) throw std::runtime_error("texture size must be a multiple of 8");
    ImageBuf img(size, size);
    Rng rng(seed);
    switch (family) {
        case TextureFamily::plain: {
            const real base = rng.uniform(0.45, 0.60);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const real n = rng.uniform(-0.02, 0.02);
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_tex(base + n);
                }
            break;
        }
        case TextureFamily::wood_grain: {
            const real angle = rng.uniform(0.0, M_PI);
            const real freq = rng.uniform(3.0, 6.0) * 2 * M_PI / size;
            const real phase = rng.uniform(0.0, 2 * M_PI);
            const real fx = std::cos(angle) * freq, fy = std::sin(angle) * freq;
            // brownish channel tints
            const real tint[3] = {real(1.05), real(0.85), real(0.65)};
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const real grain = std::sin(fx * x + fy * y + phase +
                                                real(1.5) * std::sin(real(0.13) * x + real(0.07) * y));
                    const real v = real(0.52) + real(0.14) * grain + rng.uniform(-0.03, 0.03);
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_tex(v * tint[c]);
                }
            // Natural knots: dark elliptical spots that are part of the clean
            // texture, not defects. They make good-vs-defect genuinely hard.
            const int n_knots = static_cast<int>(rng.below(3));  // 0..2
            for (int k = 0; k < n_knots; ++k) {
                const real cx = rng.uniform(6.0, size - 7.0);
                const real cy = rng.uniform(6.0, size - 7.0);
                const real rx = rng.uniform(2.0, 4.5);
                const real ry = rx * rng.uniform(0.6, 1.0);
                const real depth = rng.uniform(0.15, 0.30);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        const real d = std::pow((x - cx) / rx, 2) + std::pow((y - cy) / ry, 2);
                        if (d >= real(1)) continue;
                        const real f = real(1) - depth * (real(1) - d);
                        for (int c = 0; c < 3; ++c)
                            img.at(y, x, c) = clamp_tex(img.at(y, x, c) * f);
                    }
            }
            break;
        }
        case TextureFamily::tile: {
            const int grid = 8 << rng.below(2);  // 8 or 16 px tiles
            const real base = rng.uniform(0.55, 0.70);
            std::vector<real> tile_level((size / grid + 2) * (size / grid + 2));
            for (auto& t : tile_level) t = rng.uniform(-0.06, 0.06);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const bool grout = (y % grid == 0) || (x % grid == 0);
                    const real lvl = tile_level[(y / grid) * (size / grid + 2) + x / grid];
                    const real v = grout ? real(0.32) : base + lvl + rng.uniform(-0.015, 0.015);
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_tex(v);
                }
            break;
        }
    }
    return img;
}

namespace {

real dist_to_segment(real px, real py, const DefectSpec& s) {
    const real dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const real len2 = dx * dx + dy * dy;
    real t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : real(0);
    t = std::clamp(t, real(0), real(1));
    const real cx = s.x0 + t * dx, cy = s.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

MaskBuf render_support(const ImageBuf& image, const DefectSpec& spec) {
    MaskBuf mask(image.h, image.w);
    auto in_bounds = [&](real x, real y) {
        return x >= 0 && y >= 0 && x <= image.w - 1 && y <= image.h - 1;
    };
    switch (spec.kind) {
        case DefectKind::scratch: {
            if (!in_bounds(spec.x0, spec.y0) || !in_bounds(spec.x1, spec.y1))
                throw std::runtime_error("scratch endpoints out of bounds");
            const real r = spec.width / 2;
            for (int y = 0; y < image.h; ++y)
                for (int x = 0; x < image.w; ++x)
                    if (dist_to_segment(x, y, spec) <= r) mask.at(y, x) = 1;
            break;
        }
        case DefectKind::hole: {
            const real r = spec.width;
            if (!in_bounds(spec.x0 - r, spec.y0 - r) || !in_bounds(spec.x0 + r, spec.y0 + r))
                throw std::runtime_error("hole extends out of bounds");
            for (int y = 0; y < image.h; ++y)
                for (int x = 0; x < image.w; ++x)
                    if (std::hypot(x - spec.x0, y - spec.y0) <= r) mask.at(y, x) = 1;
            break;
        }
        case DefectKind::color_blob: {
            const real r = spec.width;
            if (!in_bounds(spec.x0 - 2 * r, spec.y0 - 2 * r) ||
                !in_bounds(spec.x0 + 2 * r, spec.y0 + 2 * r))
                throw std::runtime_error("blob extends out of bounds");
            Rng lobe_rng(spec.blob_seed);
            struct Disc {
                real x, y, r;
            };
            std::vector<Disc> discs = {{spec.x0, spec.y0, r}};
            for (int i = 0; i < 3; ++i) {
                const real a = lobe_rng.uniform(0.0, 2 * M_PI);
                const real d = lobe_rng.uniform(0.4, 0.9) * r;
                discs.push_back({spec.x0 + d * std::cos(a), spec.y0 + d * std::sin(a),
                                 r * real(lobe_rng.uniform(0.5, 0.8))});
            }
            for (int y = 0; y < image.h; ++y)
                for (int x = 0; x < image.w; ++x)
                    for (const auto& dsc : discs)
                        if (std::hypot(x - dsc.x, y - dsc.y) <= dsc.r) {
                            mask.at(y, x) = 1;
                            break;
                        }
            break;
        }
        case DefectKind::glue_strip: {
            if (!in_bounds(spec.x0, spec.y0) || !in_bounds(spec.x1, spec.y1))
                throw std::runtime_error("glue strip out of bounds");
            const int xa = static_cast<int>(std::ceil(std::min(spec.x0, spec.x1)));
            const int xb = static_cast<int>(std::floor(std::max(spec.x0, spec.x1)));
            const int ya = static_cast<int>(std::ceil(std::min(spec.y0, spec.y1)));
            const int yb = static_cast<int>(std::floor(std::max(spec.y0, spec.y1)));
            for (int y = ya; y <= yb; ++y)
                for (int x = xa; x <= xb; ++x) mask.at(y, x) = 1;
            break;
        }
    }
    if (mask.count_nonzero() == 0) throw std::runtime_error("defect renders an empty mask");
    return mask;
}

}  // namespace

std::pair<ImageBuf, MaskBuf> inject_defect(const ImageBuf& image, const DefectSpec& spec) {
    MaskBuf mask = render_support(image, spec);
    ImageBuf out = image;

    // Per-kind target color; blend weight grows with intensity. Texture values
    // live in [0.25, 0.80], which keeps the mean in-mask change above 0.1.
    real target[3];
    switch (spec.kind) {
        case DefectKind::scratch: target[0] = target[1] = target[2] = real(0.08); break;
        case DefectKind::hole: target[0] = target[1] = target[2] = real(0.02); break;
        case DefectKind::color_blob:
            target[0] = real(0.90);
            target[1] = real(0.10);
            target[2] = real(0.10);
            break;
        case DefectKind::glue_strip: target[0] = target[1] = target[2] = real(0.97); break;
    }
    const real beta = real(0.45) + real(0.55) * std::clamp(spec.intensity, real(0), real(1));
    real abs_change = 0;
    int n = 0;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            if (!mask.at(y, x)) continue;
            ++n;
            for (int c = 0; c < 3; ++c) {
                const real v = image.at(y, x, c);
                const real nv = (1 - beta) * v + beta * target[c];
                out.at(y, x, c) = nv;
                abs_change += std::abs(nv - v);
            }
        }
    if (abs_change / (3 * n) < real(0.1))
        throw std::runtime_error("defect contrast below the 0.1 floor");
    return {out, mask};
}

DefectSpec random_defect_spec(DefectKind kind, int size, Rng& rng) {
    DefectSpec s;
    s.kind = kind;
    s.intensity = rng.uniform(0.05, 1.0);
    const real m = 4;  // margin
    switch (kind) {
        case DefectKind::scratch: {
            // Endpoints at least a third of the image apart.
            do {
                s.x0 = rng.uniform(m, size - 1 - m);
                s.y0 = rng.uniform(m, size - 1 - m);
                s.x1 = rng.uniform(m, size - 1 - m);
                s.y1 = rng.uniform(m, size - 1 - m);
            } while (std::hypot(s.x1 - s.x0, s.y1 - s.y0) < size / real(3));
            s.width = rng.uniform(2.5, 4.5);
            break;
        }
        case DefectKind::hole: {
            s.width = rng.uniform(5.0, 9.0);
            s.x0 = rng.uniform(s.width + 1, size - 2 - s.width);
            s.y0 = rng.uniform(s.width + 1, size - 2 - s.width);
            break;
        }
        case DefectKind::color_blob: {
            s.width = rng.uniform(4.0, 6.5);
            s.x0 = rng.uniform(2 * s.width + 1, size - 2 - 2 * s.width);
            s.y0 = rng.uniform(2 * s.width + 1, size - 2 - 2 * s.width);
            s.blob_seed = rng.next_u64();
            break;
        }
        case DefectKind::glue_strip: {
            const bool horizontal = rng.bernoulli(0.5);
            const real thickness = rng.uniform(5.0, 9.0);
            const real len = rng.uniform(size / real(3), size - 2 * m);
            const real a = rng.uniform(m, size - 1 - m - len);
            const real b = rng.uniform(m, size - 1 - m - thickness);
            if (horizontal) {
                s.x0 = a;
                s.x1 = a + len;
                s.y0 = b;
                s.y1 = b + thickness;
            } else {
                s.y0 = a;
                s.y1 = a + len;
                s.x0 = b;
                s.x1 = b + thickness;
            }
            break;
        }
    }
    return s;
}

Corpus build_corpus(const CorpusConfig& config, const std::string& out_dir) {
    int total = config.count_good;
    for (const auto& [k, n] : config.counts) {
        if (n < 0) throw std::runtime_error("negative defect count");
        total += n;
    }
    if (total <= 0) throw std::runtime_error("corpus config has zero total count");

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    Corpus corpus;
    corpus.paired.dir = corpus.unpaired.dir = corpus.good.dir = out_dir;
    corpus.paired.seed = corpus.unpaired.seed = corpus.good.seed = config.seed;

    uint64_t index = 0;
    std::vector<std::string> clean_pool;

    // Good (defect-free) records first; they double as the clean pool.
    MaskBuf zero_mask(config.image_size, config.image_size);
    const std::string zero_mask_rel = "masks/zero.png";
    save_mask_png((fs::path(out_dir) / zero_mask_rel).string(), zero_mask);
    for (int i = 0; i < config.count_good; ++i, ++index) {
        Rng rec_rng(Rng::derive(config.seed, index));
        const std::string id = "good_" + std::to_string(i);
        ImageBuf img = generate_texture(config.family, config.image_size, rec_rng.next_u64());
        const std::string rel = "images/" + id + ".png";
        save_image_png((fs::path(out_dir) / rel).string(), img);
        clean_pool.push_back(rel);

        SampleRecord rec;
        rec.id = id;
        rec.target_path = rel;
        rec.mask_path = zero_mask_rel;
        rec.prompt = "no defect";
        rec.label = "good";
        rec.pairing = Pairing::unpaired;
        corpus.good.records.push_back(std::move(rec));
    }

    for (const auto& [kind, count] : config.counts) {
        for (int i = 0; i < count; ++i, ++index) {
            Rng rec_rng(Rng::derive(config.seed, index));
            const std::string id = defect_kind_name(kind) + "_" + std::to_string(i);
            ImageBuf clean = generate_texture(config.family, config.image_size, rec_rng.next_u64());
            DefectSpec spec = random_defect_spec(kind, config.image_size, rec_rng);
            auto [defective, mask] = inject_defect(clean, spec);

            const std::string clean_rel = "images/" + id + "_clean.png";
            const std::string target_rel = "images/" + id + "_defect.png";
            const std::string mask_rel = "masks/" + id + ".png";
            save_image_png((fs::path(out_dir) / clean_rel).string(), clean);
            save_image_png((fs::path(out_dir) / target_rel).string(), defective);
            save_mask_png((fs::path(out_dir) / mask_rel).string(), mask);

            SampleRecord rec;
            rec.id = id;
            rec.input_path = clean_rel;
            rec.target_path = target_rel;
            rec.mask_path = mask_rel;
            rec.prompt = defect_prompt(kind);
            rec.label = defect_kind_name(kind);
            rec.pairing = Pairing::paired;
            corpus.paired.records.push_back(std::move(rec));
        }
    }
    if (corpus.paired.records.empty() && corpus.good.records.empty())
        throw std::runtime_error("corpus config produced no records");

    if (!corpus.paired.records.empty() && !clean_pool.empty())
        corpus.unpaired.records =
            make_unpaired_pairs(corpus.paired.records, clean_pool, Rng::derive(config.seed, 1u << 20));

    if (!corpus.paired.records.empty())
        save_manifest(corpus.paired, (fs::path(out_dir) / "paired.manifest").string());
    if (!corpus.unpaired.records.empty())
        save_manifest(corpus.unpaired, (fs::path(out_dir) / "unpaired.manifest").string());
    if (!corpus.good.records.empty())
        save_manifest(corpus.good, (fs::path(out_dir) / "good.manifest").string());

    std::ofstream vocab((fs::path(out_dir) / "prompts.txt").string());
    for (const auto& p : prompt_vocabulary()) vocab << p << "\n";
    return corpus;
}

}  // namespace aliaug
