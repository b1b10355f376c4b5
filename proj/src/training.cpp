#include "aliaug/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace aliaug {

namespace {
constexpr uint64_t kPhiSeed = 0x5bd1e995u;  // perceptual net is seed-fixed
constexpr char kCkptMagic[8] = {'A', 'L', 'I', 'A', 'U', 'G', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace

real lr_at(const TrainConfig& cfg, long step) {
    if (cfg.warmup_steps <= 0) return cfg.learning_rate;
    const real warm = std::min(real(1), static_cast<real>(step) / cfg.warmup_steps);
    return cfg.learning_rate * warm;
}

void AdamW::init(std::vector<TensorPtr> params, const TrainConfig& cfg) {
    params_ = std::move(params);
    beta1_ = cfg.adam_beta1;
    beta2_ = cfg.adam_beta2;
    weight_decay_ = cfg.adam_weight_decay;
    max_grad_norm_ = cfg.max_grad_norm;
    m_.clear();
    v_.clear();
    for (const auto& p : params_) {
        m_.emplace_back(p->numel(), real(0));
        v_.emplace_back(p->numel(), real(0));
    }
    t_ = 0;
}

real AdamW::step(real lr) {
    real sq = 0;
    for (const auto& p : params_)
        for (real g : p->g) sq += g * g;
    const real norm = std::sqrt(sq);
    const real clip = (max_grad_norm_ > 0 && norm > max_grad_norm_) ? max_grad_norm_ / norm : real(1);

    ++t_;
    const real bc1 = real(1) - std::pow(beta1_, static_cast<real>(t_));
    const real bc2 = real(1) - std::pow(beta2_, static_cast<real>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (int j = 0; j < p.numel(); ++j) {
            const real g = p.g[j] * clip;
            m[j] = beta1_ * m[j] + (1 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1 - beta2_) * g * g;
            const real mhat = m[j] / bc1;
            const real vhat = v[j] / bc2;
            p.v[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.v[j]);
        }
    }
    return norm;
}

void AdamW::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

void Trainer::build(const TrainConfig& cfg_, const std::vector<std::string>& vocab) {
    cfg = cfg_;
    gen.build(cfg, vocab, cfg.seed);
    Rng disc_rng(Rng::derive(cfg.seed, 0xD15C));
    disc.init(aux, disc_rng);
    Rng phi_rng(kPhiSeed);
    phi.init(aux, phi_rng);
    opt_g.init(gen.params.trainable(), cfg);
    opt_d.init(aux.trainable(), cfg);
    step = 0;
    auto frozen = gen.params.frozen();
    for (const auto& e : aux.entries)
        if (!e.trainable) frozen.push_back(e.t);
    frozen_hash0 = hash_tensors(frozen);
}

LossWeights Trainer::loss_weights() const {
    LossWeights w;
    w.lambda_adv = cfg.lambda_gan;
    w.lambda_rec = cfg.lambda_l2;
    w.lambda_lpips = cfg.lambda_lpips;
    w.lambda_promptsim = cfg.lambda_clipsim;
    w.promptsim_enabled = cfg.enable_promptsim;
    return w;
}

LossBreakdown Trainer::train_step(const LoadedSample& sample) {
    if (!sample.target) throw std::runtime_error("train_step requires a target image");
    const int pid = gen.prompt_id(sample.prompt);
    const uint64_t drop_seed = Rng::derive(cfg.seed ^ 0xD809ULL, static_cast<uint64_t>(step));
    const bool drop = apply_input_dropout(sample.pairing, cfg.drop_prob, drop_seed,
                                          GeneratorConfig::Mode::train);
    TensorPtr input_t = sample.input ? image_to_tensor(*sample.input) : nullptr;
    auto mask_t = mask_to_tensor(sample.mask);
    auto target_t = image_to_tensor(*sample.target);

    LossBreakdown out;
    try {
        // Generator forward once; the graph is reused for the G update after
        // the discriminator has taken its step on the detached values.
        Tape g_tape;
        TensorPtr fake;
        {
            TapeScope scope(g_tape);
            fake = gen.forward(input_t, mask_t, pid, drop, cfg.timestep);
        }
        auto fake_detached = make_tensor(fake->shape);
        fake_detached->v = fake->v;

        {
            Tape d_tape;
            TapeScope scope(d_tape);
            opt_d.zero_grad();
            auto d_loss = adversarial_loss(disc, target_t, fake_detached, AdvRole::disc);
            if (!std::isfinite(d_loss->v[0])) throw std::runtime_error("non-finite disc loss");
            d_tape.backward(d_loss);
            opt_d.step(lr_at(cfg, step + 1));
        }
        {
            TapeScope scope(g_tape);
            opt_g.zero_grad();
            opt_d.zero_grad();  // disc grads from the gen pass are discarded
            auto adv = adversarial_loss(disc, target_t, fake, AdvRole::gen);
            auto rec = reconstruction_loss(fake, target_t);
            auto lp = perceptual_loss(phi, fake, target_t);
            auto tl = total_loss(adv, rec, lp, nullptr, loss_weights());
            g_tape.backward(tl.value);
            opt_g.step(lr_at(cfg, step + 1));
            out = tl.breakdown;
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("training aborted at step " + std::to_string(step + 1) + ": " +
                                 e.what());
    }
    ++step;
    return out;
}

int Trainer::trainable_param_count() const {
    return gen.params.trainable_count() + aux.trainable_count();
}

int Trainer::expected_trainable_count() const {
    int disc_count = 0;
    for (const auto& e : aux.entries)
        if (e.trainable) disc_count += e.t->numel();
    return gen.lora_param_count() + gen.zero_conv_param_count() + gen.embedder.param_count() +
           disc_count;
}

std::string train_loop(const DatasetManifest& train_manifest, Trainer& trainer,
                       const std::string& out_dir, const EvalHook& eval_hook) {
    if (train_manifest.records.empty()) throw std::runtime_error("empty training manifest");
    fs::create_directories(out_dir);
    const auto& cfg = trainer.cfg;

    // Preload the corpus (small by construction).
    std::vector<LoadedSample> samples;
    samples.reserve(train_manifest.records.size());
    for (const auto& rec : train_manifest.records) {
        auto s = load_sample(train_manifest, rec);
        if (auto err = validate_record(s))
            throw std::runtime_error("invalid training record '" + rec.id + "': " + *err);
        samples.push_back(std::move(s));
    }
    const long n = static_cast<long>(samples.size());

    std::ofstream log(fs::path(out_dir) / "train_log.txt", std::ios::app);
    std::string last_ckpt;

    // Record order is a pure function of (seed, epoch) so a resumed run
    // replays the interrupted one exactly.
    auto order_for_epoch = [&](long epoch) {
        std::vector<long> order(n);
        for (long i = 0; i < n; ++i) order[i] = i;
        Rng rng(Rng::derive(cfg.seed ^ 0x0EDE5ULL, static_cast<uint64_t>(epoch)));
        for (long i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        return order;
    };
    long cached_epoch = -1;
    std::vector<long> cached_order;

    while (trainer.step < cfg.max_steps) {
        const long epoch = trainer.step / n;
        if (epoch != cached_epoch) {
            cached_order = order_for_epoch(epoch);
            cached_epoch = epoch;
        }
        const LoadedSample& base = samples[cached_order[trainer.step % n]];

        LoadedSample s = base;
        const uint64_t aug_seed = Rng::derive(cfg.seed ^ 0xA06ULL, static_cast<uint64_t>(trainer.step));
        if (cfg.train_image_prep == "resized_crop_64") {
            if (s.input) {
                auto [img, msk] = basic_augment(*s.input, s.mask, aug_seed);
                s.input = img;
                if (s.target) s.target = basic_augment(*s.target, base.mask, aug_seed).first;
                s.mask = msk;
            } else if (s.target) {
                auto [img, msk] = basic_augment(*s.target, s.mask, aug_seed);
                s.target = img;
                s.mask = msk;
            }
        }

        const auto breakdown = trainer.train_step(s);
        const long step = trainer.step;

        if (log)
            log << "step " << step << " lr " << lr_at(cfg, step) << " adv " << breakdown.adv
                << " rec " << breakdown.rec << " lpips " << breakdown.lpips << " total "
                << breakdown.total << "\n";

        if (cfg.viz_frequency > 0 && step % cfg.viz_frequency == 0) {
            GeneratorConfig gcfg;
            gcfg.drop_prob = cfg.drop_prob;
            gcfg.timestep = cfg.timestep;
            gcfg.mode = GeneratorConfig::Mode::eval;
            const auto& vs = samples[0];
            ImageBuf outimg = trainer.gen.generate(vs, gcfg, 0);
            ImageBuf maskimg(vs.mask.h, vs.mask.w);
            for (int i = 0; i < vs.mask.h * vs.mask.w; ++i)
                for (int c = 0; c < 3; ++c) maskimg.px[i * 3 + c] = vs.mask.px[i];
            std::vector<std::vector<ImageBuf>> rows = {
                {vs.input ? *vs.input : ImageBuf(vs.mask.h, vs.mask.w), maskimg, outimg,
                 vs.target ? *vs.target : ImageBuf(vs.mask.h, vs.mask.w)}};
            write_sample_grid((fs::path(out_dir) / ("viz_" + std::to_string(step) + ".png")).string(),
                              rows);
        }
        if (eval_hook && cfg.eval_frequency > 0 && step % cfg.eval_frequency == 0)
            eval_hook(step, trainer);
        if (cfg.checkpointing_steps > 0 && step % cfg.checkpointing_steps == 0) {
            last_ckpt = (fs::path(out_dir) / ("ckpt_" + std::to_string(step) + ".ckpt")).string();
            save_checkpoint(trainer, last_ckpt);
        }
    }
    const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
    save_checkpoint(trainer, final_path);
    return final_path;
}

namespace {

void put_u32(std::string& buf, uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& buf, uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::string& buf, const std::string& s) {
    put_u64(buf, s.size());
    buf.append(s);
}
void put_vec(std::string& buf, const std::vector<real>& v) {
    put_u64(buf, v.size());
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(real));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("corrupt checkpoint: truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<real> vec() {
        const uint64_t n = u64();
        need(n * sizeof(real));
        std::vector<real> v(n);
        std::memcpy(v.data(), buf.data() + pos, n * sizeof(real));
        pos += n * sizeof(real);
        return v;
    }
};

void serialize_store(std::string& buf, const ParamStore& ps) {
    put_u64(buf, ps.entries.size());
    for (const auto& e : ps.entries) {
        put_str(buf, e.name);
        put_vec(buf, e.t->v);
    }
}

void restore_store(Reader& r, ParamStore& ps) {
    const uint64_t n = r.u64();
    if (n != ps.entries.size()) throw std::runtime_error("checkpoint parameter count mismatch");
    for (uint64_t i = 0; i < n; ++i) {
        const std::string name = r.str();
        auto v = r.vec();
        auto t = ps.find(name);
        if (!t) throw std::runtime_error("checkpoint names unknown parameter: " + name);
        if (static_cast<int>(v.size()) != t->numel())
            throw std::runtime_error("checkpoint size mismatch for parameter: " + name);
        t->v = std::move(v);
    }
}

void serialize_opt(std::string& buf, AdamW& opt) {
    put_u64(buf, static_cast<uint64_t>(opt.t()));
    put_u64(buf, opt.params().size());
    for (size_t i = 0; i < opt.params().size(); ++i) {
        put_vec(buf, opt.moments_m()[i]);
        put_vec(buf, opt.moments_v()[i]);
    }
}

void restore_opt(Reader& r, AdamW& opt) {
    opt.set_t(static_cast<long>(r.u64()));
    const uint64_t n = r.u64();
    if (n != opt.params().size()) throw std::runtime_error("optimizer state count mismatch");
    for (uint64_t i = 0; i < n; ++i) {
        opt.moments_m()[i] = r.vec();
        opt.moments_v()[i] = r.vec();
    }
}

}  // namespace

void save_checkpoint(const Trainer& trainer, const std::string& path) {
    std::string buf;
    put_str(buf, trainer.cfg.to_text());
    {
        std::string vocab_text;
        for (const auto& p : trainer.gen.vocab) vocab_text += p + "\n";
        put_str(buf, vocab_text);
    }
    put_u64(buf, static_cast<uint64_t>(trainer.step));
    put_u64(buf, trainer.frozen_hash0);
    serialize_store(buf, trainer.gen.params);
    serialize_store(buf, trainer.aux);
    serialize_opt(buf, const_cast<Trainer&>(trainer).opt_g);
    serialize_opt(buf, const_cast<Trainer&>(trainer).opt_d);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kCkptMagic, 8);
    const uint32_t version = kCkptVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const uint64_t checksum = fnv1a(buf);
    f.write(reinterpret_cast<const char*>(&checksum), 8);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Trainer load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string all = ss.str();
    if (all.size() < 20 || std::memcmp(all.data(), kCkptMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version;
    std::memcpy(&version, all.data() + 8, 4);
    if (version != kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint64_t checksum;
    std::memcpy(&checksum, all.data() + 12, 8);
    const std::string buf = all.substr(20);
    if (fnv1a(buf) != checksum) throw std::runtime_error("checkpoint checksum mismatch: " + path);

    Reader r(buf);
    const std::string cfg_text = r.str();
    const std::string vocab_text = r.str();
    std::vector<std::string> vocab;
    {
        std::istringstream vs(vocab_text);
        std::string line;
        while (std::getline(vs, line))
            if (!line.empty()) vocab.push_back(line);
    }
    Trainer trainer;
    trainer.build(parse_train_config_text(cfg_text), vocab);
    trainer.step = static_cast<long>(r.u64());
    const uint64_t frozen_hash = r.u64();
    restore_store(r, trainer.gen.params);
    restore_store(r, trainer.aux);
    restore_opt(r, trainer.opt_g);
    restore_opt(r, trainer.opt_d);
    trainer.frozen_hash0 = frozen_hash;
    return trainer;
}

void write_sample_grid(const std::string& path, const std::vector<std::vector<ImageBuf>>& rows) {
    if (rows.empty() || rows[0].empty()) return;
    const int th = rows[0][0].h, tw = rows[0][0].w, pad = 2;
    const int cols = static_cast<int>(rows[0].size());
    ImageBuf grid(static_cast<int>(rows.size()) * (th + pad) - pad, cols * (tw + pad) - pad,
                  real(1));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) {
            const auto& img = rows[r][c];
            for (int y = 0; y < std::min(th, img.h); ++y)
                for (int x = 0; x < std::min(tw, img.w); ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        grid.at(static_cast<int>(r) * (th + pad) + y,
                                static_cast<int>(c) * (tw + pad) + x, ch) = img.at(y, x, ch);
        }
    save_image_png(path, grid);
}

}  // namespace aliaug
