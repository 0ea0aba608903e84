#include "mixedrc/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mixedrc/codec.hpp"
#include "mixedrc/imgops.hpp"

namespace mixedrc::train {

namespace {

// lattice value noise, hashed so the field extends smoothly in every
// direction under translation/rotation
double lattice(uint64_t seed, int64_t ix, int64_t iy) {
    uint64_t h = seed;
    h ^= static_cast<uint64_t>(ix) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<uint64_t>(iy) * 0xC2B2AE3D27D4EB4Full;
    Rng r(h);
    return r.uniform();
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
    const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
    const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
    const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

}  // namespace

Clip synth_clip(const SynthSpec& spec, uint64_t clip_seed) {
    if (spec.frames < 1 || spec.height < 8 || spec.width < 8)
        throw std::invalid_argument("synth_clip: invalid clip dimensions");
    if (spec.channels != 1 && spec.channels != 3)
        throw std::invalid_argument("synth_clip: channels must be 1 or 3");
    Rng rng(clip_seed);
    const double speed = rng.uniform(spec.min_velocity, spec.max_velocity);
    const double dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double vx = speed * std::cos(dir);
    const double vy = speed * std::sin(dir);
    const double spin = spec.max_spin > 0.0 ? rng.uniform(-spec.max_spin, spec.max_spin) : 0.0;
    const uint64_t tex_seed = rng.next_u64();
    const double disk_x = rng.uniform(0.25, 0.75) * spec.width;
    const double disk_y = rng.uniform(0.25, 0.75) * spec.height;
    const double disk_r = rng.uniform(0.12, 0.22) * std::min(spec.width, spec.height);
    const double bar_y = rng.uniform(0.2, 0.8) * spec.height;
    const double bar_w = rng.uniform(2.0, 5.0);

    const double cx = spec.width / 2.0, cy = spec.height / 2.0;

    Clip clip;
    clip.frames.reserve(spec.frames);
    for (int f = 0; f < spec.frames; ++f) {
        Tensor frame = Tensor::chw(spec.channels, spec.height, spec.width);
        const double angle = spin * f;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double ox = vx * f, oy = vy * f;
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                // rotate about center, then translate into the texture field
                const double rx = ca * (x - cx) - sa * (y - cy) + cx + ox;
                const double ry = sa * (x - cx) + ca * (y - cy) + cy + oy;
                double v = 0.50 * value_noise(tex_seed, rx / 16.0, ry / 16.0) +
                           0.30 * value_noise(tex_seed + 1, rx / 7.0, ry / 7.0) +
                           0.20 * value_noise(tex_seed + 2, rx / 3.0, ry / 3.0);
                const double dx = rx - disk_x, dy = ry - disk_y;
                if (dx * dx + dy * dy < disk_r * disk_r) v = 0.25 * v + 0.68;
                if (std::abs(ry - bar_y) < bar_w) v = 0.35 * v + 0.05;
                const double base = 0.08 + 0.84 * std::clamp(v, 0.0, 1.0);
                for (int c = 0; c < spec.channels; ++c) {
                    const double shade = spec.channels == 1 ? base : std::clamp(base + 0.05 * (c - 1), 0.0, 1.0);
                    frame.at(c, y, x) = static_cast<float>(shade);
                }
            }
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

SyntheticDataset::SyntheticDataset(const SynthSpec& spec, int temporal_radius)
    : spec_(spec), radius_(temporal_radius) {
    if (spec_.n_clips < 1) throw std::invalid_argument("dataset: n_clips must be >= 1");
    if (spec_.height % spec_.scale != 0 || spec_.width % spec_.scale != 0)
        throw std::invalid_argument("dataset: clip dims must divide by scale");
    clips_.reserve(spec_.n_clips);
    for (int i = 0; i < spec_.n_clips; ++i) {
        ClipTriple t;
        t.gt = synth_clip(spec_, derive_seed(spec_.seed, "clip" + std::to_string(i)));
        Clip lr_clean = imgops::bicubic_resize(t.gt, 1.0 / spec_.scale);
        t.lr = codec::toy_decode(codec::toy_encode(lr_clean, spec_.qp));
        t.refs.reserve(t.gt.frame_count());
        for (const Tensor& f : t.gt.frames)
            t.refs.push_back(codec::toy_decode(codec::toy_encode_frame(f, spec_.ref_qp)).frames.front());
        clips_.push_back(std::move(t));
    }
}

Sample SyntheticDataset::sample_patch(Rng& rng, int d_max, int patch_hr) const {
    if (patch_hr % spec_.scale != 0) throw std::invalid_argument("sample_patch: patch must divide by scale");
    if (d_max < 1 || d_max >= spec_.frames)
        throw std::invalid_argument("sample_patch: d_max out of range for clip length");
    const int ci = rng.uniform_int(0, static_cast<int>(clips_.size()) - 1);
    const ClipTriple& clip = clips_[ci];
    const int frames = clip.gt.frame_count();
    const int t = rng.uniform_int(radius_, frames - 1 - radius_);
    const int mag = rng.uniform_int(1, d_max);
    const bool fwd_ok = t + mag < frames;
    const bool bwd_ok = t - mag >= 0;
    int d;
    if (fwd_ok && bwd_ok)
        d = rng.uniform_int(0, 1) ? mag : -mag;
    else if (fwd_ok)
        d = mag;
    else if (bwd_ok)
        d = -mag;
    else
        throw std::invalid_argument("sample_patch: clip too short for d_max");

    const int r = spec_.scale;
    const int patch_lr = patch_hr / r;
    const int max_by = spec_.height / r - patch_lr;
    const int max_bx = spec_.width / r - patch_lr;
    if (max_by < 0 || max_bx < 0) throw std::invalid_argument("sample_patch: patch larger than clip");
    const int by = rng.uniform_int(0, max_by);
    const int bx = rng.uniform_int(0, max_bx);

    auto crop = [](const Tensor& f, int y0, int x0, int size) {
        Tensor out = Tensor::chw(f.c(), size, size);
        for (int c = 0; c < f.c(); ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) out.at(c, y, x) = f.at(c, y0 + y, x0 + x);
        return out;
    };

    Sample s;
    for (int i = t - radius_; i <= t + radius_; ++i)
        s.lr_window.push_back(crop(clip.lr.frames[i], by, bx, patch_lr));
    s.lr_center = s.lr_window[radius_];
    s.gt_center = crop(clip.gt.frames[t], by * r, bx * r, patch_hr);
    s.ref = crop(clip.refs[t + d], by * r, bx * r, patch_hr);
    s.d = d;
    s.id = (static_cast<uint64_t>(ci) << 48) | (static_cast<uint64_t>(t) << 32) |
           (static_cast<uint64_t>(by) << 16) | static_cast<uint64_t>(bx);
    return s;
}

Sample SyntheticDataset::full_sample(int clip_idx, int t, int d) const {
    const ClipTriple& clip = clips_.at(clip_idx);
    const int frames = clip.gt.frame_count();
    if (t < 0 || t >= frames) throw std::invalid_argument("full_sample: t out of range");
    const int tr = std::clamp(t + d, 0, frames - 1);
    Sample s;
    for (int i = t - radius_; i <= t + radius_; ++i)
        s.lr_window.push_back(clip.lr.frames[std::clamp(i, 0, frames - 1)]);
    s.lr_center = s.lr_window[radius_];
    s.gt_center = clip.gt.frames[t];
    s.ref = clip.refs[tr];
    s.d = tr - t;
    s.id = (static_cast<uint64_t>(clip_idx) << 48) | (static_cast<uint64_t>(t) << 32);
    return s;
}

double PlateauSchedule::feed(double value) {
    if (value < best_) {
        best_ = value;
        bad_ = 0;
    } else {
        ++bad_;
        if (bad_ > patience_) {
            lr_ *= 0.5;
            bad_ = 0;
        }
    }
    return lr_;
}

Trainer::Trainer(const TrainConfig& cfg, std::ostream* metrics_log)
    : cfg_(cfg),
      params_(r3n::init_params(cfg.model, cfg.seed)),
      data_(cfg.data, cfg.model.temporal_radius),
      val_data_(
          [&] {
              SynthSpec v = cfg.data;
              v.n_clips = cfg.val_clips;
              v.seed = derive_seed(cfg.data.seed, "validation");
              return v;
          }(),
          cfg.model.temporal_radius),
      sampler_(derive_seed(cfg.seed, "sampler")),
      schedule_(cfg.lr0, cfg.plateau_patience),
      log_(metrics_log) {
    if (cfg_.loss.scale != cfg_.model.scale) cfg_.loss.scale = cfg_.model.scale;
    if (!std::is_sorted(cfg_.curriculum_d.begin(), cfg_.curriculum_d.end()))
        throw std::invalid_argument("trainer: curriculum stages must be non-decreasing in d");
}

StepMetrics Trainer::train_step(const std::vector<Sample>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    params_.store.zero_grad();
    const float lambda = cfg_.loss.lambda_distan;
    const float inv_batch = 1.0f / static_cast<float>(batch.size());

    StepMetrics m;
    for (const Sample& s : batch) {
        nn::Tape t(&params_.store);
        std::vector<nn::Var> lr;
        lr.reserve(s.lr_window.size());
        for (const Tensor& f : s.lr_window) lr.push_back(t.leaf(f));
        nn::Var y_hat = r3n::forward_tape(t, lr, t.leaf(s.ref), cfg_.model);
        nn::Var l1 = t.mean_abs(t.sub(y_hat, t.constant(s.gt_center)));
        nn::Var soft = texture::soft_disentangled_loss_tape(t, s.lr_center, y_hat, s.gt_center, cfg_.loss);
        nn::Var total = lambda > 0.0f ? t.add(l1, t.scale(soft, lambda)) : l1;

        const double l1_v = t.scalar(l1);
        const double soft_v = t.scalar(soft);
        const double total_v = t.scalar(total);
        if (!std::isfinite(total_v))
            throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(adam_t_ + 1) +
                                     " on sample id " + std::to_string(s.id) + " (d=" + std::to_string(s.d) + ")");
        m.l1 += l1_v;
        m.l_distan += soft_v;
        m.total += total_v;

        t.backward(t.scale(total, inv_batch));
    }
    m.l1 /= batch.size();
    m.l_distan /= batch.size();
    m.total /= batch.size();
    m.lr = schedule_.lr();

    nn::AdamConfig adam;
    adam.lr = schedule_.lr();
    adam.beta1 = cfg_.beta1;
    adam.beta2 = cfg_.beta2;
    nn::adam_step(params_.store, adam, ++adam_t_);

    if (log_) {
        (*log_) << "{\"stage\":" << stage_index_ << ",\"step\":" << adam_t_ << ",\"l1\":" << m.l1
                << ",\"l_distan\":" << m.l_distan << ",\"total\":" << m.total << ",\"lr\":" << m.lr << "}\n";
    }
    return m;
}

std::vector<Sample> Trainer::validation_set() {
    const int d_val = cfg_.val_d > 0 ? cfg_.val_d : cfg_.curriculum_d.back();
    std::vector<Sample> set;
    for (int ci = 0; ci < static_cast<int>(val_data_.clips().size()); ++ci) {
        const int frames = val_data_.spec().frames;
        const int t0 = std::max(cfg_.model.temporal_radius, frames / 2 - d_val / 2);
        set.push_back(val_data_.full_sample(ci, std::min(t0, frames - 1 - cfg_.model.temporal_radius), d_val));
    }
    return set;
}

double Trainer::validate_psnr() {
    double acc = 0.0;
    auto set = validation_set();
    for (const Sample& s : set) {
        Tensor y_hat = r3n::forward(s.lr_window, s.ref, params_, cfg_.model);
        const double m = [&] {
            double e = 0.0;
            for (std::size_t i = 0; i < y_hat.size(); ++i) {
                const double d = static_cast<double>(y_hat.v[i]) - s.gt_center.v[i];
                e += d * d;
            }
            return e / static_cast<double>(y_hat.size());
        }();
        acc += m <= 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / m));
    }
    return acc / set.size();
}

double Trainer::validate_loss() {
    double acc = 0.0;
    auto set = validation_set();
    for (const Sample& s : set) {
        nn::Tape t(&params_.store);
        std::vector<nn::Var> lr;
        for (const Tensor& f : s.lr_window) lr.push_back(t.leaf(f));
        nn::Var y_hat = r3n::forward_tape(t, lr, t.leaf(s.ref), cfg_.model);
        nn::Var l1 = t.mean_abs(t.sub(y_hat, t.constant(s.gt_center)));
        double v = t.scalar(l1);
        if (cfg_.loss.lambda_distan > 0.0f)
            v += cfg_.loss.lambda_distan *
                 texture::soft_disentangled_loss(s.lr_center, t.val(y_hat), s.gt_center, cfg_.loss);
        acc += v;
    }
    return acc / set.size();
}

StageReport Trainer::run_stage(int d_max, int steps) {
    StageReport report;
    report.d_max = d_max;
    report.steps = steps;
    for (int step = 0; step < steps; ++step) {
        std::vector<Sample> batch;
        batch.reserve(cfg_.batch_size);
        for (int b = 0; b < cfg_.batch_size; ++b)
            batch.push_back(data_.sample_patch(sampler_, d_max, cfg_.patch_size));
        train_step(batch);
        if (cfg_.eval_interval > 0 && (step + 1) % cfg_.eval_interval == 0) schedule_.feed(validate_loss());
    }
    report.val_psnr = validate_psnr();
    report.val_loss = validate_loss();
    report.final_lr = schedule_.lr();
    ++stage_index_;
    return report;
}

CurriculumReport Trainer::run_curriculum() {
    CurriculumReport report;
    if (cfg_.curriculum) {
        for (int d : cfg_.curriculum_d) report.stages.push_back(run_stage(d, cfg_.steps_per_stage));
    } else {
        const int total = cfg_.steps_per_stage * static_cast<int>(cfg_.curriculum_d.size());
        report.stages.push_back(run_stage(cfg_.curriculum_d.back(), total));
    }
    report.final_val_psnr = report.stages.back().val_psnr;
    return report;
}

}  // namespace mixedrc::train
