#include "mixedrc/chain.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "mixedrc/bytes.hpp"
#include "mixedrc/codec.hpp"
#include "mixedrc/frame_io.hpp"
#include "mixedrc/imgops.hpp"
#include "mixedrc/rng.hpp"

namespace fs = std::filesystem;

namespace mixedrc::chain {

std::vector<uint8_t> ToyCodecAdapter::encode(const Clip& clip, int qp) { return codec::toy_encode(clip, qp); }
Clip ToyCodecAdapter::decode(const std::vector<uint8_t>& data) { return codec::toy_decode(data); }

namespace {

constexpr char kMagic[4] = {'M', 'X', 'R', 'C'};

Tensor pad_frame(const Tensor& f, int r) { return imgops::pad_to_multiple(f, r).first; }

struct TempDir {
    fs::path path;
    TempDir() {
        Rng rng(static_cast<uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
        char name[64];
        std::snprintf(name, sizeof(name), "mixedrc_%016llx",
                      static_cast<unsigned long long>(rng.next_u64()));
        path = fs::temp_directory_path() / name;
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

}  // namespace

std::string substitute_placeholders(const std::string& tmpl, const std::map<std::string, std::string>& subs) {
    std::string out = tmpl;
    for (const auto& [key, value] : subs) {
        const std::string tag = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(tag, pos)) != std::string::npos) {
            out.replace(pos, tag.size(), value);
            pos += value.size();
        }
    }
    for (const char* known : {"{in}", "{out}", "{qp}", "{w}", "{h}"})
        if (out.find(known) != std::string::npos)
            throw std::runtime_error("command template: unsubstituted placeholder " + std::string(known) + " in '" +
                                     out + "'");
    return out;
}

std::vector<uint8_t> external_adapter_run(const std::string& tmpl, const std::map<std::string, std::string>& subs) {
    const std::string cmd = substitute_placeholders(tmpl, subs);
    TempDir scratch;
    const std::string err_path = (scratch.path / "stderr.txt").string();
    const std::string full = cmd + " 2>" + err_path;
    const int rc = std::system(full.c_str());
    if (rc != 0) {
        std::string stderr_text;
        try {
            const auto data = bytes::read_file(err_path);
            stderr_text.assign(data.begin(), data.end());
        } catch (...) {
        }
        throw std::runtime_error("external codec command failed (exit " + std::to_string(rc) + "): " + cmd +
                                 (stderr_text.empty() ? "" : "\nstderr: " + stderr_text));
    }
    const auto it = subs.find("out");
    if (it == subs.end()) throw std::runtime_error("external codec: no {out} binding");
    if (!fs::exists(it->second))
        throw std::runtime_error("external codec command produced no output file '" + it->second + "': " + cmd);
    return bytes::read_file(it->second);
}

std::vector<uint8_t> ExternalCodecAdapter::encode(const Clip& clip, int qp) {
    TempDir scratch;
    const std::string in = (scratch.path / "in.y4m").string();
    const std::string out = (scratch.path / "out.bin").string();
    frame_io::write_y4m(in, clip, spec_.y4m_format);
    return external_adapter_run(spec_.encode_cmd,
                                {{"in", in},
                                 {"out", out},
                                 {"qp", std::to_string(qp)},
                                 {"w", std::to_string(clip.frames.front().w())},
                                 {"h", std::to_string(clip.frames.front().h())}});
}

Clip ExternalCodecAdapter::decode(const std::vector<uint8_t>& data) {
    TempDir scratch;
    const std::string in = (scratch.path / "in.bin").string();
    const std::string out = (scratch.path / "out.y4m").string();
    bytes::write_file(in, data);
    external_adapter_run(spec_.decode_cmd, {{"in", in}, {"out", out}, {"qp", "0"}, {"w", "0"}, {"h", "0"}});
    return frame_io::read_y4m(out);
}

MixedStream encode_mixed(const Clip& hr, int scale, int gop_size, int base_qp, int el_qp, CodecAdapter& adapter) {
    hr.validate();
    if (scale != 2 && scale != 4) throw std::invalid_argument("encode_mixed: scale must be 2 or 4");
    if (gop_size < 1) throw std::invalid_argument("encode_mixed: gop_size must be >= 1");

    MixedStream stream;
    stream.layout.gop_size = gop_size;
    stream.layout.scale = scale;
    stream.layout.frame_count = hr.frame_count();
    stream.layout.width = hr.frames.front().w();
    stream.layout.height = hr.frames.front().h();
    stream.codec_id = adapter.id();
    {
        const std::string params = "{\"base_qp\":" + std::to_string(base_qp) +
                                   ",\"el_qp\":" + std::to_string(el_qp) + "}";
        stream.codec_params.assign(params.begin(), params.end());
    }

    for (int g = 0; g < stream.layout.gop_count(); ++g) {
        const int begin = g * gop_size;
        const int end = std::min(begin + gop_size, hr.frame_count());

        Clip lr_gop;
        lr_gop.fps_num = hr.fps_num;
        lr_gop.fps_den = hr.fps_den;
        for (int i = begin; i < end; ++i)
            lr_gop.frames.push_back(imgops::bicubic_resize(pad_frame(hr.frames[i], scale), 1.0 / scale));

        Clip el_frame;
        el_frame.fps_num = hr.fps_num;
        el_frame.fps_den = hr.fps_den;
        el_frame.frames.push_back(pad_frame(hr.frames[begin], scale));

        GopRecord rec;
        rec.bl = adapter.encode(lr_gop, base_qp);
        rec.el = adapter.encode(el_frame, el_qp);
        stream.gops.push_back(std::move(rec));
    }
    return stream;
}

DecodedMixed decode_mixed(const MixedStream& stream, CodecAdapter& adapter) {
    if (stream.gops.size() != static_cast<std::size_t>(stream.layout.gop_count()))
        throw std::runtime_error("decode_mixed: GOP record count " + std::to_string(stream.gops.size()) +
                                 " does not match layout " + std::to_string(stream.layout.gop_count()));
    DecodedMixed out;
    out.layout = stream.layout;
    for (const GopRecord& rec : stream.gops) {
        Clip bl = adapter.decode(rec.bl);
        for (Tensor& f : bl.frames) out.lr.frames.push_back(std::move(f));
        out.lr.fps_num = bl.fps_num;
        out.lr.fps_den = bl.fps_den;
        Clip el = adapter.decode(rec.el);
        if (el.frames.empty()) throw std::runtime_error("decode_mixed: empty enhancement-layer payload");
        out.refs.push_back(std::move(el.frames.front()));
    }
    if (out.lr.frame_count() != stream.layout.frame_count)
        throw std::runtime_error("decode_mixed: decoded " + std::to_string(out.lr.frame_count()) +
                                 " base-layer frames, layout declares " +
                                 std::to_string(stream.layout.frame_count));
    return out;
}

Clip restore_stream(const MixedStream& stream, r3n::ModelParams& params, const r3n::R3NConfig& cfg,
                    CodecAdapter& adapter) {
    if (cfg.scale != stream.layout.scale)
        throw std::invalid_argument("restore_stream: model scale " + std::to_string(cfg.scale) +
                                    " != stream scale " + std::to_string(stream.layout.scale));
    DecodedMixed dec = decode_mixed(stream, adapter);
    const int n = cfg.temporal_radius;
    const int frames = dec.lr.frame_count();
    const imgops::CropRecord crop{stream.layout.height, stream.layout.width};

    Clip out;
    out.fps_num = dec.lr.fps_num;
    out.fps_den = dec.lr.fps_den;
    for (int t = 0; t < frames; ++t) {
        std::vector<Tensor> window;
        window.reserve(2 * n + 1);
        for (int i = t - n; i <= t + n; ++i) window.push_back(dec.lr.frames[std::clamp(i, 0, frames - 1)]);
        const Tensor& ref = dec.refs[t / stream.layout.gop_size];
        Tensor hr = r3n::forward(window, ref, params, cfg);
        if (hr.h() != crop.orig_h || hr.w() != crop.orig_w)
            hr = imgops::crop_to(hr, crop);
        out.frames.push_back(std::move(hr));
    }
    return out;
}

Clip bicubic_restore(const MixedStream& stream, CodecAdapter& adapter) {
    DecodedMixed dec = decode_mixed(stream, adapter);
    const imgops::CropRecord crop{stream.layout.height, stream.layout.width};
    Clip out;
    out.fps_num = dec.lr.fps_num;
    out.fps_den = dec.lr.fps_den;
    for (const Tensor& f : dec.lr.frames) {
        Tensor hr = imgops::bicubic_resize(f, stream.layout.scale);
        if (hr.h() != crop.orig_h || hr.w() != crop.orig_w) hr = imgops::crop_to(hr, crop);
        out.frames.push_back(std::move(hr));
    }
    return out;
}

std::vector<uint8_t> serialize(const MixedStream& stream) {
    bytes::Writer w;
    w.raw(kMagic, 4);
    w.u8(stream.version);
    w.u8(static_cast<uint8_t>(stream.layout.scale));
    w.u16(static_cast<uint16_t>(stream.layout.gop_size));
    w.u32(static_cast<uint32_t>(stream.layout.width));
    w.u32(static_cast<uint32_t>(stream.layout.height));
    w.u32(static_cast<uint32_t>(stream.layout.frame_count));
    w.u8(stream.codec_id);
    w.u16(static_cast<uint16_t>(stream.codec_params.size()));
    w.raw(stream.codec_params.data(), stream.codec_params.size());
    for (const GopRecord& rec : stream.gops) {
        w.u32(static_cast<uint32_t>(rec.el.size()));
        w.raw(rec.el.data(), rec.el.size());
        w.u32(static_cast<uint32_t>(rec.bl.size()));
        w.raw(rec.bl.data(), rec.bl.size());
    }
    return std::move(w.buf);
}

MixedStream deserialize(const std::vector<uint8_t>& data) {
    bytes::Reader r(data);
    if (r.str(4) != std::string(kMagic, 4)) throw std::runtime_error("container: bad magic, not a MXRC stream");
    MixedStream s;
    s.version = r.u8();
    if (s.version != 1) throw std::runtime_error("container: unsupported version " + std::to_string(s.version));
    s.layout.scale = r.u8();
    s.layout.gop_size = r.u16();
    s.layout.width = static_cast<int>(r.u32());
    s.layout.height = static_cast<int>(r.u32());
    s.layout.frame_count = static_cast<int>(r.u32());
    s.codec_id = r.u8();
    const uint16_t plen = r.u16();
    s.codec_params = r.blob(plen);
    if (s.layout.gop_size < 1 || s.layout.frame_count < 1)
        throw std::runtime_error("container: corrupt layout");
    for (int g = 0; g < s.layout.gop_count(); ++g) {
        GopRecord rec;
        rec.el = r.blob(r.u32());
        rec.bl = r.blob(r.u32());
        s.gops.push_back(std::move(rec));
    }
    if (!r.done()) throw std::runtime_error("container: trailing bytes after last GOP");
    return s;
}

void write_stream(const std::string& path, const MixedStream& stream) {
    bytes::write_file(path, serialize(stream));
}

MixedStream read_stream(const std::string& path) { return deserialize(bytes::read_file(path)); }

}  // namespace mixedrc::chain
