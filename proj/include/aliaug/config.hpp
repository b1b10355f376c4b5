#pragma once

#include "aliaug/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace aliaug {

// Training hyperparameters. Defaults are the reference schedule; the config
// file is a flat key=value list and unknown keys are rejected.
struct TrainConfig {
    real lambda_gan = real(2.5);
    real lambda_lpips = real(10.0);
    real lambda_l2 = real(10.0);
    real lambda_clipsim = real(5.0);
    bool enable_promptsim = false;

    int lora_rank_unet = 8;
    int lora_rank_vae = 4;
    real lora_alpha = real(8.0);

    real learning_rate = real(5e-4);
    int warmup_steps = 500;
    real adam_beta1 = real(0.9);
    real adam_beta2 = real(0.999);
    real adam_weight_decay = real(1e-2);
    real max_grad_norm = real(1.0);
    int batch_size = 1;
    int gradient_accumulation_steps = 1;
    int max_steps = 10000;
    int checkpointing_steps = 500;
    int eval_frequency = 100;
    int viz_frequency = 100;
    int num_samples_for_eval = 100;

    std::string train_image_prep = "resized_crop_64";
    std::string test_image_prep = "resized_crop_64";

    real drop_prob = real(0.25);
    int timestep = 999;
    int image_size = 64;
    uint64_t seed = 0;

    // Snapshot in canonical key order (also the checkpoint config blob).
    std::string to_text() const;
};

// Parses a flat key=value (or "key value") file. Lines starting with '#' are
// comments. Throws std::runtime_error naming the offending key or line.
TrainConfig parse_train_config(const std::string& path);
TrainConfig parse_train_config_text(const std::string& text);

}  // namespace aliaug
