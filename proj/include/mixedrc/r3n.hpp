#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mixedrc/align.hpp"
#include "mixedrc/nn.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::r3n {

struct R3NConfig {
    int scale = 2;               // 2 or 4
    int temporal_radius = 1;     // N; 1 for 2x, 2 for 4x
    int in_channels = 1;
    int feat_channels = 32;
    int n_resgroups_extract = 2;
    int n_resgroups_reconstruct = 2;
    int blocks_per_group = 4;
    bool share_extractor = true;
    align::AlignConfig align;

    int window() const { return 2 * temporal_radius + 1; }
    void validate() const;
};

struct ModelParams {
    nn::ParamStore store;
    uint64_t seed = 0;

    ModelParams() : store(0) {}
    explicit ModelParams(uint64_t s) : store(s), seed(s) {}
};

// Deterministic parameter materialization. Offset projections and the
// reconstruction head are zero-initialized, so a fresh model reproduces the
// bicubic skip exactly.
ModelParams init_params(const R3NConfig& cfg, uint64_t seed);

// Tape forward over 2N+1 LR frames and one HR reference; returns the
// restored HR center frame, clamped to [0,1].
nn::Var forward_tape(nn::Tape& t, const std::vector<nn::Var>& lr_frames, nn::Var ref, const R3NConfig& cfg);

// Eager forward.
Tensor forward(const std::vector<Tensor>& lr_frames, const Tensor& ref, ModelParams& params,
               const R3NConfig& cfg);
Tensor forward(const Clip& lr_window, const Tensor& ref, ModelParams& params, const R3NConfig& cfg);

// Versioned binary checkpoint: magic "R3N1", length-prefixed UTF-8 JSON
// config, then named float32 tensors.
void save_checkpoint(const ModelParams& params, const R3NConfig& cfg, const std::string& path);
std::pair<ModelParams, R3NConfig> load_checkpoint(const std::string& path);

std::string config_to_json(const R3NConfig& cfg);
R3NConfig config_from_json(const std::string& json);

}  // namespace mixedrc::r3n
