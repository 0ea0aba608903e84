#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixedrc/r3n.hpp"
#include "mixedrc/rng.hpp"
#include "mixedrc/tensor.hpp"
#include "mixedrc/texture.hpp"

namespace mixedrc::train {

// Procedural moving-texture clips: translating/rotating value-noise
// octaves plus hard-edged shapes, degraded through the toy coding chain.
struct SynthSpec {
    int n_clips = 4;
    int frames = 40;
    int height = 96;
    int width = 96;
    int channels = 1;
    double min_velocity = 0.2;  // px/frame at HR scale
    double max_velocity = 0.6;
    double max_spin = 0.0;      // rad/frame
    int scale = 2;
    int qp = 37;
    int ref_qp = 28;
    uint64_t seed = 1;
};

Clip synth_clip(const SynthSpec& spec, uint64_t clip_seed);

struct ClipTriple {
    Clip gt;                   // HR source
    Clip lr;                   // bicubic downsample + toy codec at spec.qp
    std::vector<Tensor> refs;  // per-frame HR intra-coded at spec.ref_qp
};

struct Sample {
    std::vector<Tensor> lr_window;  // 2N+1 LR patches
    Tensor lr_center;
    Tensor gt_center;               // HR patch
    Tensor ref;                     // HR patch from a frame at distance d
    int d = 0;
    uint64_t id = 0;
};

class SyntheticDataset {
public:
    SyntheticDataset(const SynthSpec& spec, int temporal_radius);

    const SynthSpec& spec() const { return spec_; }
    const std::vector<ClipTriple>& clips() const { return clips_; }

    // Random patch sample; |d| uniform over 1..d_max, sign uniform over the
    // feasible directions. patch_hr must divide by the scale.
    Sample sample_patch(Rng& rng, int d_max, int patch_hr) const;

    // Deterministic full-frame sample for validation.
    Sample full_sample(int clip_idx, int t, int d) const;

private:
    SynthSpec spec_;
    int radius_;
    std::vector<ClipTriple> clips_;
};

struct TrainConfig {
    r3n::R3NConfig model;
    SynthSpec data;
    texture::LossConfig loss;
    double lr0 = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch_size = 4;
    int patch_size = 64;  // HR pixels
    int steps_per_stage = 200;
    int eval_interval = 50;
    int plateau_patience = 5;
    std::vector<int> curriculum_d{8, 16, 24, 32};
    bool curriculum = true;
    int val_clips = 2;
    int val_d = 0;  // 0: use the final curriculum distance
    uint64_t seed = 7;

    TrainConfig() {
        model.feat_channels = 16;
        model.n_resgroups_extract = 1;
        model.n_resgroups_reconstruct = 1;
        model.blocks_per_group = 2;
    }
};

struct StepMetrics {
    double l1 = 0.0;
    double l_distan = 0.0;
    double total = 0.0;
    double lr = 0.0;
};

struct StageReport {
    int d_max = 0;
    int steps = 0;
    double val_psnr = 0.0;
    double val_loss = 0.0;
    double final_lr = 0.0;
};

struct CurriculumReport {
    std::vector<StageReport> stages;
    double final_val_psnr = 0.0;
};

// Halves the learning rate when the monitored value has not improved for
// more than `patience` consecutive evaluations; never increases it.
class PlateauSchedule {
public:
    PlateauSchedule(double lr0, int patience) : lr_(lr0), patience_(patience) {}
    double feed(double value);
    double lr() const { return lr_; }

private:
    double lr_;
    int patience_;
    double best_ = 1e300;
    int bad_ = 0;
};

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg, std::ostream* metrics_log = nullptr);

    // One optimizer update over a batch; loss = l1 + lambda * soft
    // disentangled term. Throws on non-finite loss, naming the samples.
    StepMetrics train_step(const std::vector<Sample>& batch);

    StageReport run_stage(int d_max, int steps);
    CurriculumReport run_curriculum();

    double validate_psnr();
    double validate_loss();

    r3n::ModelParams& params() { return params_; }
    const r3n::ModelParams& params() const { return params_; }
    const TrainConfig& config() const { return cfg_; }
    SyntheticDataset& dataset() { return data_; }
    Rng& sampler() { return sampler_; }
    int global_step() const { return static_cast<int>(adam_t_); }
    double current_lr() const { return schedule_.lr(); }

private:
    std::vector<Sample> validation_set();

    TrainConfig cfg_;
    r3n::ModelParams params_;
    SyntheticDataset data_;
    SyntheticDataset val_data_;
    Rng sampler_;
    PlateauSchedule schedule_;
    int64_t adam_t_ = 0;
    int stage_index_ = 0;
    std::ostream* log_;
};

}  // namespace mixedrc::train
