#include "aliaug/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace aliaug {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("invalid boolean value: " + v);
}

}  // namespace

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "lambda_gan = " << lambda_gan << "\n"
       << "lambda_lpips = " << lambda_lpips << "\n"
       << "lambda_l2 = " << lambda_l2 << "\n"
       << "lambda_clipsim = " << lambda_clipsim << "\n"
       << "enable_promptsim = " << (enable_promptsim ? "true" : "false") << "\n"
       << "lora_rank_unet = " << lora_rank_unet << "\n"
       << "lora_rank_vae = " << lora_rank_vae << "\n"
       << "lora_alpha = " << lora_alpha << "\n"
       << "learning_rate = " << learning_rate << "\n"
       << "warmup_steps = " << warmup_steps << "\n"
       << "adam_beta1 = " << adam_beta1 << "\n"
       << "adam_beta2 = " << adam_beta2 << "\n"
       << "adam_weight_decay = " << adam_weight_decay << "\n"
       << "max_grad_norm = " << max_grad_norm << "\n"
       << "batch_size = " << batch_size << "\n"
       << "gradient_accumulation_steps = " << gradient_accumulation_steps << "\n"
       << "max_steps = " << max_steps << "\n"
       << "checkpointing_steps = " << checkpointing_steps << "\n"
       << "eval_frequency = " << eval_frequency << "\n"
       << "viz_frequency = " << viz_frequency << "\n"
       << "num_samples_for_eval = " << num_samples_for_eval << "\n"
       << "train_image_prep = " << train_image_prep << "\n"
       << "test_image_prep = " << test_image_prep << "\n"
       << "drop_prob = " << drop_prob << "\n"
       << "timestep = " << timestep << "\n"
       << "image_size = " << image_size << "\n"
       << "seed = " << seed << "\n";
    return os.str();
}

TrainConfig parse_train_config_text(const std::string& text) {
    TrainConfig cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"lambda_gan", [&](const std::string& v) { cfg.lambda_gan = std::stod(v); }},
        {"lambda_lpips", [&](const std::string& v) { cfg.lambda_lpips = std::stod(v); }},
        {"lambda_l2", [&](const std::string& v) { cfg.lambda_l2 = std::stod(v); }},
        {"lambda_clipsim", [&](const std::string& v) { cfg.lambda_clipsim = std::stod(v); }},
        {"enable_promptsim", [&](const std::string& v) { cfg.enable_promptsim = parse_bool(v); }},
        {"lora_rank_unet", [&](const std::string& v) { cfg.lora_rank_unet = std::stoi(v); }},
        {"lora_rank_vae", [&](const std::string& v) { cfg.lora_rank_vae = std::stoi(v); }},
        {"lora_alpha", [&](const std::string& v) { cfg.lora_alpha = std::stod(v); }},
        {"learning_rate", [&](const std::string& v) { cfg.learning_rate = std::stod(v); }},
        {"warmup_steps", [&](const std::string& v) { cfg.warmup_steps = std::stoi(v); }},
        {"adam_beta1", [&](const std::string& v) { cfg.adam_beta1 = std::stod(v); }},
        {"adam_beta2", [&](const std::string& v) { cfg.adam_beta2 = std::stod(v); }},
        {"adam_weight_decay", [&](const std::string& v) { cfg.adam_weight_decay = std::stod(v); }},
        {"max_grad_norm", [&](const std::string& v) { cfg.max_grad_norm = std::stod(v); }},
        {"batch_size", [&](const std::string& v) { cfg.batch_size = std::stoi(v); }},
        {"gradient_accumulation_steps",
         [&](const std::string& v) { cfg.gradient_accumulation_steps = std::stoi(v); }},
        {"max_steps", [&](const std::string& v) { cfg.max_steps = std::stoi(v); }},
        {"checkpointing_steps", [&](const std::string& v) { cfg.checkpointing_steps = std::stoi(v); }},
        {"eval_frequency", [&](const std::string& v) { cfg.eval_frequency = std::stoi(v); }},
        {"viz_frequency", [&](const std::string& v) { cfg.viz_frequency = std::stoi(v); }},
        {"num_samples_for_eval",
         [&](const std::string& v) { cfg.num_samples_for_eval = std::stoi(v); }},
        {"train_image_prep", [&](const std::string& v) { cfg.train_image_prep = v; }},
        {"test_image_prep", [&](const std::string& v) { cfg.test_image_prep = v; }},
        {"drop_prob", [&](const std::string& v) { cfg.drop_prob = std::stod(v); }},
        {"timestep", [&](const std::string& v) { cfg.timestep = std::stoi(v); }},
        {"image_size", [&](const std::string& v) { cfg.image_size = std::stoi(v); }},
        {"seed", [&](const std::string& v) { cfg.seed = std::stoull(v); }},
    };

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::string key, value;
        const auto eq = t.find('=');
        if (eq != std::string::npos) {
            key = trim(t.substr(0, eq));
            value = trim(t.substr(eq + 1));
        } else {
            const auto sp = t.find_first_of(" \t");
            if (sp == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key=value");
            key = trim(t.substr(0, sp));
            value = trim(t.substr(sp + 1));
        }
        auto it = setters.find(key);
        if (it == setters.end())
            throw std::runtime_error("unknown config key: " + key + " (line " +
                                     std::to_string(lineno) + ")");
        try {
            it->second(value);
        } catch (const std::exception&) {
            throw std::runtime_error("invalid value for config key " + key + ": " + value);
        }
    }
    if (cfg.max_steps <= 0) throw std::runtime_error("max_steps must be positive");
    if (cfg.learning_rate <= 0) throw std::runtime_error("learning_rate must be positive");
    if (cfg.drop_prob < 0 || cfg.drop_prob >= real(0.3))
        throw std::runtime_error("drop_prob must be in [0, 0.3)");
    if (cfg.image_size % 8 != 0) throw std::runtime_error("image_size must be a multiple of 8");
    return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_train_config_text(buf.str());
}

}  // namespace aliaug
