#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mixedrc/bytes.hpp"
#include "mixedrc/imgops.hpp"
#include "mixedrc/r3n.hpp"
#include "test_support.hpp"

using namespace mixedrc;
using namespace mixedrc::r3n;

namespace {

R3NConfig tiny_config() {
    R3NConfig cfg;
    cfg.scale = 2;
    cfg.temporal_radius = 1;
    cfg.in_channels = 1;
    cfg.feat_channels = 9;
    cfg.n_resgroups_extract = 1;
    cfg.n_resgroups_reconstruct = 1;
    cfg.blocks_per_group = 1;
    cfg.align.n_refiners = 1;
    return cfg;
}

std::vector<Tensor> random_window(Rng& rng, const R3NConfig& cfg, int h, int w) {
    std::vector<Tensor> frames;
    for (int i = 0; i < cfg.window(); ++i) frames.push_back(test::random_frame(rng, cfg.in_channels, h, w));
    return frames;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("forward output shape and fresh-model bicubic identity") {
    Rng rng(61);
    R3NConfig cfg = tiny_config();
    ModelParams params = init_params(cfg, 5);
    auto lr = random_window(rng, cfg, 10, 12);
    Tensor ref = test::random_frame(rng, 1, 20, 24);

    Tensor out = forward(lr, ref, params, cfg);
    CHECK(out.dims == std::vector<int>{1, 20, 24});

    Tensor skip = imgops::bicubic_resize(lr[1], 2.0);
    CHECK(out.v == skip.v);  // zero-initialized head: exact equality
}

TEST_CASE("init_params is deterministic and grows with refiners") {
    R3NConfig cfg = tiny_config();
    ModelParams a = init_params(cfg, 42);
    ModelParams b = init_params(cfg, 42);
    REQUIRE(a.store.entries().size() == b.store.entries().size());
    for (const auto& [name, e] : a.store.entries()) CHECK(e.value.v == b.store.at(name).value.v);

    ModelParams c = init_params(cfg, 43);
    bool any_diff = false;
    for (const auto& [name, e] : c.store.entries())
        if (e.value.v != a.store.at(name).value.v) any_diff = true;
    CHECK(any_diff);

    std::size_t prev = 0;
    for (int n : {0, 1, 2, 3}) {
        R3NConfig more = cfg;
        more.align.n_refiners = n;
        const std::size_t count = init_params(more, 1).store.param_count();
        CHECK(count > prev);
        prev = count;
    }
}

TEST_CASE("forward rejects malformed inputs") {
    Rng rng(62);
    R3NConfig cfg = tiny_config();
    ModelParams params = init_params(cfg, 5);
    auto lr = random_window(rng, cfg, 10, 12);
    Tensor ref = test::random_frame(rng, 1, 20, 24);

    auto short_window = lr;
    short_window.pop_back();
    CHECK_THROWS_AS(forward(short_window, ref, params, cfg), std::invalid_argument);

    Tensor bad_ref = test::random_frame(rng, 1, 18, 24);
    CHECK_THROWS_AS(forward(lr, bad_ref, params, cfg), std::invalid_argument);
}

TEST_CASE("irrelevant reference degrades gracefully, never NaN") {
    Rng rng(63);
    R3NConfig cfg = tiny_config();
    ModelParams params = init_params(cfg, 5);
    // give the model nonzero weights so the ref path actually contributes
    Rng wr(99);
    for (auto& [name, e] : params.store.entries())
        for (float& v : e.value.v) v += static_cast<float>(wr.normal() * 0.03);
    auto lr = random_window(rng, cfg, 10, 12);
    Tensor unrelated = test::random_frame(rng, 1, 20, 24);
    Tensor out = forward(lr, unrelated, params, cfg);
    for (float v : out.v) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round trip restores params bitwise and config exactly") {
    Rng rng(64);
    R3NConfig cfg = tiny_config();
    cfg.align.attention = align::Attention::Channel;
    cfg.align.dilation_rates = {1, 3};
    cfg.feat_channels = 8;
    ModelParams params = init_params(cfg, 77);
    Rng wr(100);
    for (auto& [name, e] : params.store.entries())
        for (float& v : e.value.v) v += static_cast<float>(wr.normal() * 0.05);

    auto lr = random_window(rng, cfg, 8, 8);
    Tensor ref = test::random_frame(rng, 1, 16, 16);
    Tensor before = forward(lr, ref, params, cfg);

    const std::string path = temp_path("r3n_test_ckpt.bin");
    save_checkpoint(params, cfg, path);
    auto [loaded, cfg2] = load_checkpoint(path);

    CHECK(config_to_json(cfg2) == config_to_json(cfg));
    CHECK(loaded.seed == params.seed);
    REQUIRE(loaded.store.entries().size() == params.store.entries().size());
    for (const auto& [name, e] : params.store.entries()) CHECK(loaded.store.at(name).value.v == e.value.v);

    Tensor after = forward(lr, ref, loaded, cfg2);
    CHECK(after.v == before.v);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint with tampered magic is rejected") {
    R3NConfig cfg = tiny_config();
    ModelParams params = init_params(cfg, 1);
    const std::string path = temp_path("r3n_bad_magic.bin");
    save_checkpoint(params, cfg, path);

    auto data = bytes::read_file(path);
    data[0] = 'X';
    bytes::write_file(path, data);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);

    // truncation is reported, not garbage
    data = bytes::read_file(path);
    data[0] = 'R';
    data.resize(data.size() / 2);
    bytes::write_file(path, data);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("forward is bitwise reproducible") {
    Rng rng(65);
    R3NConfig cfg = tiny_config();
    ModelParams params = init_params(cfg, 3);
    auto lr = random_window(rng, cfg, 10, 10);
    Tensor ref = test::random_frame(rng, 1, 20, 20);
    Tensor a = forward(lr, ref, params, cfg);
    Tensor b = forward(lr, ref, params, cfg);
    CHECK(a.v == b.v);
}
