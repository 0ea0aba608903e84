#include "mixedrc/r3n.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "mixedrc/bytes.hpp"
#include "mixedrc/imgops.hpp"

namespace mixedrc::r3n {

using nn::Tape;
using nn::Var;

void R3NConfig::validate() const {
    if (scale != 2 && scale != 4) throw std::invalid_argument("r3n config: scale must be 2 or 4");
    if (temporal_radius < 0) throw std::invalid_argument("r3n config: temporal_radius must be >= 0");
    if (in_channels < 1) throw std::invalid_argument("r3n config: in_channels must be >= 1");
    if (feat_channels < static_cast<int>(align.dilation_rates.size()))
        throw std::invalid_argument("r3n config: feat_channels below branch count");
    if (feat_channels % static_cast<int>(align.dilation_rates.size()) != 0)
        throw std::invalid_argument("r3n config: feat_channels must divide by Incep-HDC branch count");
}

namespace {

Var res_block(Tape& t, const std::string& prefix, Var x, int ch) {
    Var y = t.relu(nn::conv_layer(t, prefix + ".conv1", x, ch, 3));
    y = nn::conv_layer(t, prefix + ".conv2", y, ch, 3);
    return t.add(x, y);
}

Var res_group(Tape& t, const std::string& prefix, Var x, int ch, int blocks) {
    Var y = x;
    for (int b = 0; b < blocks; ++b) y = res_block(t, prefix + ".block" + std::to_string(b), y, ch);
    y = nn::conv_layer(t, prefix + ".tail", y, ch, 3);
    return t.add(x, y);
}

Var trunk(Tape& t, const std::string& prefix, Var x, const R3NConfig& cfg, int groups) {
    Var y = x;
    for (int g = 0; g < groups; ++g)
        y = res_group(t, prefix + ".group" + std::to_string(g), y, cfg.feat_channels, cfg.blocks_per_group);
    return y;
}

}  // namespace

Var forward_tape(Tape& t, const std::vector<Var>& lr_frames, Var ref, const R3NConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(lr_frames.size()) != cfg.window())
        throw std::invalid_argument("r3n forward: expected " + std::to_string(cfg.window()) + " LR frames, got " +
                                    std::to_string(lr_frames.size()));
    const Tensor& center = t.val(lr_frames[cfg.temporal_radius]);
    require_frame(center, "r3n LR frame");
    for (const Var v : lr_frames)
        require_same_shape(t.val(v), center, "r3n LR frame");
    const Tensor& ref_t = t.val(ref);
    require_frame(ref_t, "r3n ref frame");
    if (ref_t.c() != center.c() || ref_t.h() != center.h() * cfg.scale || ref_t.w() != center.w() * cfg.scale)
        throw std::invalid_argument("r3n forward: ref " + ref_t.shape_str() + " is not " +
                                    std::to_string(cfg.scale) + "x the LR frame " + center.shape_str());
    if (center.c() != cfg.in_channels)
        throw std::invalid_argument("r3n forward: configured for " + std::to_string(cfg.in_channels) +
                                    " channels, got " + std::to_string(center.c()));

    const int fc = cfg.feat_channels;
    const std::string ext_lr = "extract";
    const std::string ext_ref = cfg.share_extractor ? "extract" : "extract_ref";

    // scale-space conversion + shared feature extraction
    Var ref_s = t.pixel_unshuffle(ref, cfg.scale);
    Var f_ref = nn::conv_layer(t, "head.ref", ref_s, fc, 3);
    f_ref = trunk(t, ext_ref, f_ref, cfg, cfg.n_resgroups_extract);

    std::vector<Var> feats;
    feats.reserve(lr_frames.size());
    for (const Var fr : lr_frames) {
        Var f = nn::conv_layer(t, "head.lr", fr, fc, 3);
        feats.push_back(trunk(t, ext_lr, f, cfg, cfg.n_resgroups_extract));
    }

    // align every non-center stream to the center frame's features
    const int n = cfg.temporal_radius;
    Var f_center = feats[n];
    std::vector<Var> streams;
    streams.push_back(f_center);
    for (int i = 0; i < static_cast<int>(feats.size()); ++i) {
        if (i == n) continue;
        streams.push_back(align::align(t, "align.lr" + std::to_string(i), feats[i], f_center, cfg.align));
    }
    streams.push_back(align::align(t, "align.ref", f_ref, f_center, cfg.align));

    Var fused = nn::conv_layer(t, "fuse", t.concat_ch(streams), fc, 1);
    Var rec = trunk(t, "reconstruct", fused, cfg, cfg.n_resgroups_reconstruct);

    // zero-initialized head: a fresh model emits exactly the bicubic skip
    Var up = nn::conv_layer(t, "head.out", rec, cfg.in_channels * cfg.scale * cfg.scale, 3, 1, nn::Init::Zero);
    Var residual = t.pixel_shuffle(up, cfg.scale);
    Var skip = t.constant(imgops::bicubic_resize(center, cfg.scale));
    return t.clamp(t.add(residual, skip), 0.0f, 1.0f);
}

ModelParams init_params(const R3NConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams params(seed);
    // materialize every parameter with a dummy tiny forward
    Tape t(&params.store);
    std::vector<Var> lr;
    for (int i = 0; i < cfg.window(); ++i) lr.push_back(t.leaf(Tensor::chw(cfg.in_channels, 8, 8)));
    Var ref = t.leaf(Tensor::chw(cfg.in_channels, 8 * cfg.scale, 8 * cfg.scale));
    forward_tape(t, lr, ref, cfg);
    params.store.zero_grad();
    return params;
}

Tensor forward(const std::vector<Tensor>& lr_frames, const Tensor& ref, ModelParams& params,
               const R3NConfig& cfg) {
    Tape t(&params.store);
    std::vector<Var> lr;
    lr.reserve(lr_frames.size());
    for (const Tensor& f : lr_frames) lr.push_back(t.leaf(f));
    Var out = forward_tape(t, lr, t.leaf(ref), cfg);
    return t.val(out);
}

Tensor forward(const Clip& lr_window, const Tensor& ref, ModelParams& params, const R3NConfig& cfg) {
    return forward(lr_window.frames, ref, params, cfg);
}

std::string config_to_json(const R3NConfig& cfg) {
    nlohmann::json j;
    j["scale"] = cfg.scale;
    j["temporal_radius"] = cfg.temporal_radius;
    j["in_channels"] = cfg.in_channels;
    j["feat_channels"] = cfg.feat_channels;
    j["n_resgroups_extract"] = cfg.n_resgroups_extract;
    j["n_resgroups_reconstruct"] = cfg.n_resgroups_reconstruct;
    j["blocks_per_group"] = cfg.blocks_per_group;
    j["share_extractor"] = cfg.share_extractor;
    j["align"] = {{"n_refiners", cfg.align.n_refiners},
                  {"kernel_size", cfg.align.kernel_size},
                  {"dilation_rates", cfg.align.dilation_rates},
                  {"offset_clamp", cfg.align.offset_clamp},
                  {"attention", align::to_string(cfg.align.attention)},
                  {"mode", align::to_string(cfg.align.mode)},
                  {"hdc_blocks", cfg.align.hdc_blocks}};
    return j.dump();
}

R3NConfig config_from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    R3NConfig cfg;
    cfg.scale = j.at("scale").get<int>();
    cfg.temporal_radius = j.at("temporal_radius").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.feat_channels = j.at("feat_channels").get<int>();
    cfg.n_resgroups_extract = j.at("n_resgroups_extract").get<int>();
    cfg.n_resgroups_reconstruct = j.at("n_resgroups_reconstruct").get<int>();
    cfg.blocks_per_group = j.at("blocks_per_group").get<int>();
    cfg.share_extractor = j.at("share_extractor").get<bool>();
    const auto& a = j.at("align");
    cfg.align.n_refiners = a.at("n_refiners").get<int>();
    cfg.align.kernel_size = a.at("kernel_size").get<int>();
    cfg.align.dilation_rates = a.at("dilation_rates").get<std::vector<int>>();
    cfg.align.offset_clamp = a.at("offset_clamp").get<float>();
    cfg.align.attention = align::attention_from_string(a.at("attention").get<std::string>());
    cfg.align.mode = align::mode_from_string(a.at("mode").get<std::string>());
    cfg.align.hdc_blocks = a.at("hdc_blocks").get<int>();
    cfg.validate();
    return cfg;
}

namespace {
constexpr char kMagic[4] = {'R', '3', 'N', '1'};
}

void save_checkpoint(const ModelParams& params, const R3NConfig& cfg, const std::string& path) {
    bytes::Writer w;
    w.raw(kMagic, 4);
    nlohmann::json meta = nlohmann::json::parse(config_to_json(cfg));
    meta["seed"] = params.seed;
    const std::string js = meta.dump();
    w.u32(static_cast<uint32_t>(js.size()));
    w.str(js);
    w.u32(static_cast<uint32_t>(params.store.entries().size()));
    for (const auto& [name, e] : params.store.entries()) {
        w.u32(static_cast<uint32_t>(name.size()));
        w.str(name);
        w.u8(0);  // dtype: float32
        w.u8(static_cast<uint8_t>(e.value.dims.size()));
        for (int d : e.value.dims) w.u32(static_cast<uint32_t>(d));
        w.f32_array(e.value.v.data(), e.value.size());
    }
    bytes::write_file(path, w.buf);
}

std::pair<ModelParams, R3NConfig> load_checkpoint(const std::string& path) {
    const std::vector<uint8_t> data = bytes::read_file(path);
    bytes::Reader r(data);
    const std::string magic = r.str(4);
    if (magic != std::string(kMagic, 4))
        throw std::runtime_error("checkpoint '" + path + "': bad magic, not an R3N1 checkpoint");
    const uint32_t jlen = r.u32();
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.str(jlen));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint '" + path + "': corrupt config block: " + e.what());
    }
    R3NConfig cfg = config_from_json(meta.dump());
    ModelParams params(meta.value("seed", 0ull));

    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t nlen = r.u32();
        const std::string name = r.str(nlen);
        const uint8_t dtype = r.u8();
        if (dtype != 0) throw std::runtime_error("checkpoint '" + path + "': unsupported dtype");
        const uint8_t ndim = r.u8();
        std::vector<int> dims(ndim);
        for (auto& d : dims) d = static_cast<int>(r.u32());
        nn::ParamStore::Entry& e = params.store.ensure(name, dims, nn::Init::Zero);
        for (auto& v : e.value.v) v = r.f32();
    }
    if (!r.done()) throw std::runtime_error("checkpoint '" + path + "': trailing bytes");
    return {std::move(params), cfg};
}

}  // namespace mixedrc::r3n
