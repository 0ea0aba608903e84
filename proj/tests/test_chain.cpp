#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mixedrc/chain.hpp"
#include "mixedrc/codec.hpp"
#include "mixedrc/eval.hpp"
#include "mixedrc/imgops.hpp"
#include "mixedrc/train.hpp"
#include "test_support.hpp"

using namespace mixedrc;
using namespace mixedrc::chain;

namespace {

Clip textured_clip(int frames, int h, int w, uint64_t seed) {
    train::SynthSpec spec;
    spec.frames = frames;
    spec.height = h;
    spec.width = w;
    return train::synth_clip(spec, seed);
}

// snap values onto the 8-bit grid so dyadic-rational content survives I/O
Clip quantized_clip(const Clip& c) {
    Clip out = c;
    for (Tensor& f : out.frames)
        for (float& v : f.v) v = std::round(v * 255.0f) / 255.0f;
    return out;
}

}  // namespace

TEST_CASE("toy codec: near-lossless at qp=0 on dyadic content") {
    Clip src = textured_clip(2, 32, 32, 123);
    for (Tensor& f : src.frames)
        for (float& v : f.v) v = std::round(v * 256.0f) / 256.0f;
    Clip rec = codec::toy_decode(codec::toy_encode(src, 0));
    CHECK(rec.frame_count() == src.frame_count());
    CHECK(rec.frames[0].dims == src.frames[0].dims);
    CHECK(eval::psnr(rec, src) >= 55.0);
}

TEST_CASE("toy codec: rate and quality fall with rising qp") {
    Clip src = textured_clip(3, 48, 48, 124);
    auto b28 = codec::toy_encode(src, 28);
    auto b37 = codec::toy_encode(src, 37);
    CHECK(b37.size() < b28.size());
    const double p28 = eval::psnr(codec::toy_decode(b28), src);
    const double p37 = eval::psnr(codec::toy_decode(b37), src);
    CHECK(p37 < p28);
}

TEST_CASE("toy codec: deterministic, validates qp, rejects truncation") {
    Clip src = textured_clip(1, 16, 24, 125);
    auto a = codec::toy_encode(src, 30);
    auto b = codec::toy_encode(src, 30);
    CHECK(a == b);
    CHECK_THROWS_AS(codec::toy_encode(src, 52), std::invalid_argument);
    CHECK_THROWS_AS(codec::toy_encode(src, -1), std::invalid_argument);

    a.resize(a.size() - 3);
    CHECK_THROWS_WITH_AS(codec::toy_decode(a), doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("toy codec handles non-multiple-of-8 frames") {
    Clip src = textured_clip(1, 19, 21, 126);
    Clip rec = codec::toy_decode(codec::toy_encode(src, 10));
    CHECK(rec.frames[0].dims == src.frames[0].dims);
    CHECK(eval::psnr(rec, src) > 30.0);
}

TEST_CASE("gop accounting over awkward frame counts") {
    ToyCodecAdapter adapter;
    for (int frames : {1, 15, 16, 17, 32}) {
        Clip src = textured_clip(frames, 16, 16, 200 + frames);
        MixedStream s = encode_mixed(src, 2, 16, 37, 28, adapter);
        const int expect_gops = (frames + 15) / 16;
        CHECK(static_cast<int>(s.gops.size()) == expect_gops);
        CHECK(s.layout.gop_count() == expect_gops);

        DecodedMixed dec = decode_mixed(s, adapter);
        CHECK(dec.lr.frame_count() == frames);
        CHECK(static_cast<int>(dec.refs.size()) == expect_gops);
        CHECK(dec.lr.frames[0].h() == 8);
        CHECK(dec.refs[0].h() == 16);
    }
}

TEST_CASE("el picture fraction is exactly 1/16 at gop 16") {
    ToyCodecAdapter adapter;
    Clip src = textured_clip(32, 16, 16, 300);
    MixedStream s = encode_mixed(src, 2, 16, 37, 28, adapter);
    CHECK(static_cast<int>(s.gops.size()) * 16 == s.layout.frame_count);
    CHECK(s.gops.size() == 2);
}

TEST_CASE("container serialization round trip is bitwise stable") {
    ToyCodecAdapter adapter;
    Clip src = textured_clip(17, 24, 16, 301);
    MixedStream s = encode_mixed(src, 2, 16, 37, 28, adapter);
    auto bytes1 = serialize(s);
    MixedStream s2 = deserialize(bytes1);
    auto bytes2 = serialize(s2);
    CHECK(bytes1 == bytes2);

    // header overhead stays under 1 KB
    std::size_t payload = 0;
    for (const auto& g : s.gops) payload += g.el.size() + g.bl.size();
    CHECK(bytes1.size() - payload < 1024);

    auto bad = bytes1;
    bad[0] = 'Z';
    CHECK_THROWS_WITH_AS(deserialize(bad), doctest::Contains("magic"), std::runtime_error);
    auto trunc = bytes1;
    trunc.resize(trunc.size() - 5);
    CHECK_THROWS_AS(deserialize(trunc), std::runtime_error);
}

TEST_CASE("near-lossless chain reproduces the bicubic downsample") {
    ToyCodecAdapter adapter;
    Clip src = quantized_clip(textured_clip(4, 32, 32, 302));
    MixedStream s = encode_mixed(src, 2, 16, 0, 0, adapter);
    DecodedMixed dec = decode_mixed(s, adapter);
    Clip expect = imgops::bicubic_resize(src, 0.5);
    CHECK(eval::psnr(dec.lr, expect) >= 55.0);
}

TEST_CASE("restore_stream with a fresh model equals the bicubic baseline") {
    ToyCodecAdapter adapter;
    Clip src = textured_clip(5, 24, 24, 303);
    MixedStream s = encode_mixed(src, 2, 4, 37, 28, adapter);

    r3n::R3NConfig cfg;
    cfg.feat_channels = 9;
    cfg.n_resgroups_extract = 1;
    cfg.n_resgroups_reconstruct = 1;
    cfg.blocks_per_group = 1;
    cfg.align.n_refiners = 1;
    r3n::ModelParams params = r3n::init_params(cfg, 4);

    Clip restored = restore_stream(s, params, cfg, adapter);
    Clip baseline = bicubic_restore(s, adapter);
    REQUIRE(restored.frame_count() == src.frame_count());
    CHECK(restored.frames[0].dims == src.frames[0].dims);
    for (int i = 0; i < restored.frame_count(); ++i)
        CHECK(restored.frames[i].v == baseline.frames[i].v);

    r3n::R3NConfig wrong = cfg;
    wrong.scale = 4;
    wrong.temporal_radius = 2;
    r3n::ModelParams wp = r3n::init_params(wrong, 4);
    CHECK_THROWS_AS(restore_stream(s, wp, wrong, adapter), std::invalid_argument);
}

TEST_CASE("restore_stream crops odd-sized sources back to their dimensions") {
    ToyCodecAdapter adapter;
    Clip src = textured_clip(3, 22, 18, 304);
    for (Tensor& f : src.frames) f = imgops::crop_to(f, imgops::CropRecord{21, 17});
    MixedStream s = encode_mixed(src, 2, 4, 32, 28, adapter);
    r3n::R3NConfig cfg;
    cfg.feat_channels = 9;
    cfg.n_resgroups_extract = 1;
    cfg.n_resgroups_reconstruct = 1;
    cfg.blocks_per_group = 1;
    cfg.align.n_refiners = 0;
    r3n::ModelParams params = r3n::init_params(cfg, 4);
    Clip restored = restore_stream(s, params, cfg, adapter);
    CHECK(restored.frames[0].h() == 21);
    CHECK(restored.frames[0].w() == 17);
}

TEST_CASE("placeholder substitution and audit") {
    std::map<std::string, std::string> subs{{"in", "/tmp/a"}, {"out", "/tmp/b"}, {"qp", "37"}, {"w", "16"}, {"h", "8"}};
    CHECK(substitute_placeholders("enc {in} -q {qp} -s {w}x{h} -o {out}", subs) ==
          "enc /tmp/a -q 37 -s 16x8 -o /tmp/b");
    CHECK_THROWS_WITH_AS(substitute_placeholders("enc {in} {out}", {{"in", "x"}}), doctest::Contains("{out}"),
                         std::runtime_error);
}

TEST_CASE("external adapter: identity command round trip") {
    ExternalCodecSpec spec;
    spec.encode_cmd = "cp {in} {out}";
    spec.decode_cmd = "cp {in} {out}";
    ExternalCodecAdapter adapter(spec);
    Clip src = quantized_clip(textured_clip(2, 16, 16, 305));
    auto payload = adapter.encode(src, 20);
    Clip back = adapter.decode(payload);
    REQUIRE(back.frame_count() == src.frame_count());
    CHECK(test::max_abs_diff(back.frames[0], src.frames[0]) < 1e-6);
}

TEST_CASE("external adapter: missing binary reported with the command") {
    ExternalCodecSpec spec;
    spec.encode_cmd = "definitely_missing_encoder_binary {in} {out}";
    spec.decode_cmd = "cp {in} {out}";
    ExternalCodecAdapter adapter(spec);
    Clip src = textured_clip(1, 16, 16, 306);
    CHECK_THROWS_WITH_AS(adapter.encode(src, 20), doctest::Contains("definitely_missing_encoder_binary"),
                         std::runtime_error);
}
