#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aliaug/report.hpp"
#include "aliaug/synth.hpp"
#include "aliaug/training.hpp"

namespace fs = std::filesystem;
using namespace aliaug;

namespace {

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    uint64_t h = 0xcbf29ce484222325ull;
    char c;
    while (f.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Every subcommand drops a metadata file next to its outputs: the effective
// config snapshot plus content hashes of the files it wrote.
void write_run_metadata(const std::string& out_dir, const std::string& subcommand,
                        const std::string& config_snapshot,
                        const std::vector<std::string>& artifacts) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "run_metadata.txt");
    f << "subcommand=" << subcommand << "\n";
    for (const auto& a : artifacts) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a_file(a)));
        f << "artifact " << buf << " " << a << "\n";
    }
    if (!config_snapshot.empty()) f << "config:\n" << config_snapshot;
}

CorpusConfig parse_corpus_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    CorpusConfig cfg;
    cfg.counts = {{DefectKind::scratch, 4},
                  {DefectKind::hole, 4},
                  {DefectKind::color_blob, 4},
                  {DefectKind::glue_strip, 3}};
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream is(line);
        std::string key, value;
        if (!(is >> key)) continue;
        auto eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        }
        if (value.empty()) is >> value;
        if (value.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": missing value for key '" + key + "'");
        try {
            if (key == "image_size") cfg.image_size = std::stoi(value);
            else if (key == "count_good") cfg.count_good = std::stoi(value);
            else if (key == "count_scratch") cfg.counts[DefectKind::scratch] = std::stoi(value);
            else if (key == "count_hole") cfg.counts[DefectKind::hole] = std::stoi(value);
            else if (key == "count_color_blob")
                cfg.counts[DefectKind::color_blob] = std::stoi(value);
            else if (key == "count_glue_strip")
                cfg.counts[DefectKind::glue_strip] = std::stoi(value);
            else if (key == "family") cfg.family = texture_family_from_name(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else throw std::runtime_error("unknown config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("config key '" + key + "': bad value '" + value + "'");
        }
    }
    return cfg;
}

std::string corpus_config_text(const CorpusConfig& c) {
    std::ostringstream os;
    os << "image_size=" << c.image_size << "\n"
       << "count_good=" << c.count_good << "\n";
    for (const auto& [kind, n] : c.counts)
        os << "count_" << defect_kind_name(kind) << "=" << n << "\n";
    os << "family=" << texture_family_name(c.family) << "\n"
       << "seed=" << c.seed << "\n";
    return os.str();
}

// Merges several manifests into one, re-rooting every path to absolute form.
DatasetManifest load_merged(const std::vector<std::string>& paths) {
    DatasetManifest out;
    for (const auto& p : paths) {
        DatasetManifest m = load_manifest(p);
        for (auto rec : m.records) {
            rec.input_path = m.resolve(rec.input_path);
            rec.mask_path = m.resolve(rec.mask_path);
            rec.target_path = m.resolve(rec.target_path);
            out.records.push_back(std::move(rec));
        }
        if (out.records.empty() || out.seed == 0) out.seed = m.seed;
    }
    if (out.records.empty()) throw std::runtime_error("no records in the given manifests");
    return out;
}

std::string cache_dir_or(const std::string& fallback) {
    const char* env = std::getenv("ALIAUG_CACHE_DIR");
    return env && *env ? std::string(env) : fallback;
}

int run(int argc, char** argv) {
    CLI::App app{"ali-aug: single-step mask-and-prompt-conditioned defect image editor"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", checkpoint_path;
    std::vector<std::string> manifest_paths;
    uint64_t seed = 0;
    bool seed_given = false;
    bool mask_only = false;
    int n_per_record = 4;

    auto add_common = [&](CLI::App* sub, bool needs_manifest) {
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_given = true;
        });
        if (needs_manifest)
            sub->add_option("--manifest", manifest_paths, "dataset manifest (repeatable)");
    };

    auto* sc_synth = app.add_subcommand("synth-corpus", "generate the toy defect corpus");
    sc_synth->add_option("--config", config_path, "corpus config file");
    add_common(sc_synth, false);

    auto* sc_train = app.add_subcommand("train", "train the editor");
    sc_train->add_option("--config", config_path, "training config file");
    sc_train->add_option("--checkpoint", checkpoint_path, "resume from checkpoint");
    add_common(sc_train, true);

    auto* sc_gen = app.add_subcommand("generate", "run the editor over a manifest");
    sc_gen->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sc_gen->add_flag("--mask-only", mask_only, "condition on mask+prompt alone");
    add_common(sc_gen, true);

    auto* sc_cas = app.add_subcommand("build-cas", "assemble the all-synthetic training set");
    sc_cas->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sc_cas->add_option("--n-per-record", n_per_record, "synthetic copies per real record");
    add_common(sc_cas, true);

    auto* sc_nas = app.add_subcommand("build-nas", "assemble the real+synthetic training set");
    sc_nas->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sc_nas->add_option("--n-per-record", n_per_record, "synthetic copies per real record");
    add_common(sc_nas, true);

    auto* sc_fid = app.add_subcommand("eval-fid", "FID between two image sets");
    add_common(sc_fid, true);

    auto* sc_ds = app.add_subcommand("eval-downstream", "train and score the downstream model");
    add_common(sc_ds, true);

    auto* sc_report = app.add_subcommand("report", "full D_S / D_S_AUG / CAS / NAS comparison");
    sc_report->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sc_report->add_option("--n-per-record", n_per_record, "synthetic copies per real record");
    add_common(sc_report, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (*sc_synth) {
        CorpusConfig cfg = config_path.empty() ? CorpusConfig{} : parse_corpus_config(config_path);
        if (config_path.empty())
            cfg.counts = {{DefectKind::scratch, 4},
                          {DefectKind::hole, 4},
                          {DefectKind::color_blob, 4},
                          {DefectKind::glue_strip, 3}};
        if (seed_given) cfg.seed = seed;
        Corpus corpus = build_corpus(cfg, out_dir);
        write_run_metadata(out_dir, "synth-corpus", corpus_config_text(cfg),
                           {(fs::path(out_dir) / "paired.manifest").string(),
                            (fs::path(out_dir) / "unpaired.manifest").string(),
                            (fs::path(out_dir) / "good.manifest").string()});
        std::cout << "wrote " << corpus.paired.records.size() << " paired, "
                  << corpus.unpaired.records.size() << " unpaired, "
                  << corpus.good.records.size() << " good records to " << out_dir << "\n";
        return 0;
    }

    if (*sc_train) {
        if (manifest_paths.empty()) throw std::runtime_error("train requires --manifest");
        DatasetManifest data = load_merged(manifest_paths);
        Trainer trainer;
        if (!checkpoint_path.empty()) {
            trainer = load_checkpoint(checkpoint_path);
            if (!config_path.empty()) {
                TrainConfig cfg = parse_train_config(config_path);
                if (seed_given) cfg.seed = seed;
                if (cfg.to_text() != trainer.cfg.to_text())
                    throw std::runtime_error("config file disagrees with checkpoint config");
            }
        } else {
            TrainConfig cfg =
                config_path.empty() ? TrainConfig{} : parse_train_config(config_path);
            if (seed_given) cfg.seed = seed;
            trainer.build(cfg, prompt_vocabulary());
        }
        std::string final_ckpt = train_loop(data, trainer, out_dir);
        write_run_metadata(out_dir, "train", trainer.cfg.to_text(), {final_ckpt});
        std::cout << "final checkpoint: " << final_ckpt << "\n";
        return 0;
    }

    if (*sc_gen) {
        if (manifest_paths.empty()) throw std::runtime_error("generate requires --manifest");
        DatasetManifest data = load_merged(manifest_paths);
        Trainer trainer = load_checkpoint(checkpoint_path);
        GeneratorConfig gcfg;
        gcfg.mode = GeneratorConfig::Mode::eval;
        gcfg.drop_prob = trainer.cfg.drop_prob;
        gcfg.timestep = trainer.cfg.timestep;
        fs::create_directories(fs::path(out_dir) / "images");

        DatasetManifest gen_manifest;
        gen_manifest.dir = out_dir;
        gen_manifest.seed = seed;
        for (size_t i = 0; i < data.records.size(); ++i) {
            const auto& rec = data.records[i];
            LoadedSample s = load_sample(data, rec);
            if (mask_only) {
                s.input.reset();
                s.pairing = Pairing::mask_only;
            }
            ImageBuf img = trainer.gen.generate(s, gcfg, Rng::derive(seed, i));
            SampleRecord r;
            r.id = rec.id + "_gen";
            r.mask_path = rec.mask_path;
            r.target_path = "images/" + r.id + ".png";
            r.prompt = rec.prompt;
            r.label = rec.label;
            r.pairing = Pairing::mask_only;
            r.provenance = "synthetic";
            save_image_png(gen_manifest.resolve(r.target_path), img);
            gen_manifest.records.push_back(std::move(r));
        }
        const std::string mpath = (fs::path(out_dir) / "generated.manifest").string();
        save_manifest(gen_manifest, mpath);
        write_run_metadata(out_dir, "generate", trainer.cfg.to_text(), {mpath});
        std::cout << "wrote " << gen_manifest.records.size() << " generated records to "
                  << out_dir << "\n";
        return 0;
    }

    if (*sc_cas || *sc_nas) {
        if (manifest_paths.empty()) throw std::runtime_error("requires --manifest");
        DatasetManifest data = load_merged(manifest_paths);
        Trainer trainer = load_checkpoint(checkpoint_path);
        const bool nas = static_cast<bool>(*sc_nas);
        BuildResult res = nas ? build_nas(data, trainer.gen, n_per_record, out_dir, seed)
                              : build_cas(data, trainer.gen, n_per_record, out_dir, seed);
        const std::string mpath =
            (fs::path(out_dir) / (nas ? "nas.manifest" : "cas.manifest")).string();
        save_manifest(res.manifest, mpath);
        write_run_metadata(out_dir, nas ? "build-nas" : "build-cas", trainer.cfg.to_text(),
                           {mpath});
        std::cout << "wrote " << res.manifest.records.size() << " records ("
                  << res.n_failed << " failed) to " << mpath << "\n";
        return 0;
    }

    if (*sc_fid) {
        if (manifest_paths.size() != 2)
            throw std::runtime_error("eval-fid requires two --manifest arguments (real, generated)");
        DatasetManifest a = load_manifest(manifest_paths[0]);
        DatasetManifest b = load_manifest(manifest_paths[1]);
        FeatureExtractor ext;
        ext.init();
        FidResult r = compute_fid(a, b, ext);
        std::cout << "fid=" << r.fid << " n_real=" << r.n_real
                  << " n_generated=" << r.n_generated << "\n";
        return 0;
    }

    if (*sc_ds) {
        if (manifest_paths.size() != 2)
            throw std::runtime_error(
                "eval-downstream requires two --manifest arguments (train, test)");
        DatasetManifest train = load_manifest(manifest_paths[0]);
        DatasetManifest test = load_manifest(manifest_paths[1]);
        DownstreamModel model = train_downstream(train, seed);
        DownstreamMetrics m = eval_downstream(model, test);
        std::cout << "precision=" << m.precision << "\nrecall=" << m.recall
                  << "\naccuracy=" << m.accuracy << "\niou=" << m.iou << "\n";
        return 0;
    }

    if (*sc_report) {
        if (manifest_paths.empty()) throw std::runtime_error("report requires --manifest");
        DatasetManifest data = load_merged(manifest_paths);
        Trainer trainer = load_checkpoint(checkpoint_path);
        const std::string work = cache_dir_or((fs::path(out_dir) / "work").string());
        EvalReport report = run_report(data, trainer.gen, {seed, seed + 1, seed + 2},
                                       n_per_record, work);
        fs::create_directories(out_dir);
        const std::string rpath = (fs::path(out_dir) / "report.txt").string();
        std::ofstream(rpath) << serialize_report(report);
        write_run_metadata(out_dir, "report", trainer.cfg.to_text(), {rpath});
        std::cout << format_table(report);
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
