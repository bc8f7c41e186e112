#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "ebsr/checkpoint.hpp"
#include "ebsr/network.hpp"

using namespace ebsr;

namespace {

ModelConfig tiny_cfg(int scale = 4, Variant v = Variant::ebsr) {
    ModelConfig cfg;
    cfg.blocks = 2;
    cfg.channels = 8;
    cfg.scale = scale;
    cfg.variant = v;
    cfg.reduction = 4;
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("depth_to_space definition and inverse") {
    auto t = Tensor<float>::from(Shape{1, 4, 1, 1}, {1, 2, 3, 4});  // [a,b,c,d]
    auto out = depth_to_space(t, 2);
    CHECK(out.shape() == Shape{1, 1, 2, 2});
    CHECK(out.at(0, 0, 0, 0) == 1);
    CHECK(out.at(0, 0, 0, 1) == 2);
    CHECK(out.at(0, 0, 1, 0) == 3);
    CHECK(out.at(0, 0, 1, 1) == 4);

    Rng rng(3);
    for (int r : {2, 3}) {
        Tensor<float> x(2, 9 * r * r, 3, 4);
        x.fill_uniform(rng, -1.0, 1.0);
        auto rt = space_to_depth(depth_to_space(x, r), r);
        REQUIRE(rt.shape() == x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i) REQUIRE(rt[i] == x[i]);
    }
}

TEST_CASE("model forward shape contract per scale") {
    for (int scale : {2, 3, 4}) {
        Model<float> m(tiny_cfg(scale));
        Tensor<float> x(1, 3, 8, 8, 0.3f);
        auto y = m.forward(x, ForwardMode{});
        CHECK(y.shape() == Shape{1, 3, 8 * scale, 8 * scale});
    }
    // 1x3x32x32 at x4 -> 1x3x128x128
    Model<float> m4(tiny_cfg(4));
    Tensor<float> x(1, 3, 32, 32, 0.5f);
    CHECK(m4.forward(x, ForwardMode{}).shape() == Shape{1, 3, 128, 128});

    Tensor<float> bad(1, 4, 8, 8);
    CHECK_THROWS_AS(m4.forward(bad, ForwardMode{}), DimensionError);
}

TEST_CASE("untrained output is finite and bounded at standard init") {
    for (Variant v : {Variant::fp, Variant::baseline, Variant::ebsr}) {
        Model<float> m(tiny_cfg(4, v));
        Rng rng(5);
        Tensor<float> x(1, 3, 12, 12);
        x.fill_uniform(rng, 0.0, 1.0);
        auto y = m.forward(x, ForwardMode{});
        CHECK(y.all_finite());
        CHECK(y.max_abs() <= 10.0);
    }
}

TEST_CASE("same seed gives identical parameters; forward is deterministic") {
    Model<float> a(tiny_cfg()), b(tiny_cfg());
    auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->name == pb[i]->name);
        for (std::int64_t j = 0; j < pa[i]->value.size(); ++j)
            REQUIRE(pa[i]->value[j] == pb[i]->value[j]);
    }
    Rng rng(7);
    Tensor<float> x(1, 3, 10, 10);
    x.fill_uniform(rng, 0.0, 1.0);
    auto y1 = a.forward(x, ForwardMode{});
    auto y2 = a.forward(x, ForwardMode{});
    for (std::int64_t i = 0; i < y1.size(); ++i) REQUIRE(y1[i] == y2[i]);
}

TEST_CASE("audit: exactly 2*blocks binary layers, head and tail fp") {
    Model<float> m(tiny_cfg());
    auto rows = m.audit();
    int binary = 0;
    for (const auto& r : rows) {
        if (r.precision == "binary") ++binary;
        if (r.layer == "head" || r.layer.rfind("tail.", 0) == 0) CHECK(r.precision == "fp");
    }
    CHECK(binary == 2 * m.config().blocks);

    Model<float> fp(tiny_cfg(4, Variant::fp));
    for (const auto& r : fp.audit()) CHECK(r.precision != "binary");
}

TEST_CASE("global residual wiring") {
    ModelConfig cfg = tiny_cfg(2, Variant::baseline);
    cfg.rho = 0.0f;  // blocks contribute nothing
    Model<float> m(cfg);
    Rng rng(9);
    Tensor<float> x(1, 3, 6, 6);
    x.fill_uniform(rng, 0.0, 1.0);

    Tensor<float> head_out, body_out, last_block;
    std::string sel = "head";
    m.forward(x, ForwardMode{}, &sel, &head_out);
    sel = "body";
    m.forward(x, ForwardMode{}, &sel, &body_out);
    sel = "block1";
    m.forward(x, ForwardMode{}, &sel, &last_block);

    // with rho = 0 every block is the identity, so the tail input is
    // head_out + head_out: the long skip adds the head output
    for (std::int64_t i = 0; i < head_out.size(); ++i) {
        REQUIRE(last_block[i] == head_out[i]);
        REQUIRE(body_out[i] == head_out[i] + head_out[i]);
    }
}

TEST_CASE("checkpoint round trip is byte-identical and loss-free") {
    Model<float> m(tiny_cfg());
    const std::string p1 = "ckpt_test_a.bin", p2 = "ckpt_test_b.bin";
    save_checkpoint(m, p1);
    Model<float> loaded = load_checkpoint(p1);
    auto pa = m.params(), pb = loaded.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::int64_t j = 0; j < pa[i]->value.size(); ++j)
            REQUIRE(pa[i]->value[j] == pb[i]->value[j]);
    save_checkpoint(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoint detects corruption and bad magic") {
    Model<float> m(tiny_cfg());
    const std::string path = "ckpt_test_corrupt.bin";
    save_checkpoint(m, path);
    std::string blob = read_file(path);

    // flip one payload byte
    std::string bad = blob;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), ChecksumError);

    // wrong magic
    std::string wrong = blob;
    wrong[0] = 'X';
    write_file(path, wrong);
    CHECK_THROWS(load_checkpoint(path));
    std::remove(path.c_str());
}

TEST_CASE("loading into a mismatched config names the parameter") {
    Model<float> m(tiny_cfg());
    const std::string path = "ckpt_test_mismatch.bin";
    save_checkpoint(m, path);
    std::string blob = read_file(path);

    // re-serialize with a different channel count in the config record
    std::string config_text;
    std::vector<ckpt::Entry> entries;
    ckpt::parse(blob, config_text, entries);
    ModelConfig cfg = ModelConfig::from_text(config_text);
    cfg.channels = 16;
    write_file(path, ckpt::serialize(cfg.to_text(), entries));

    try {
        load_checkpoint(path);
        FAIL("expected a shape mismatch");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("head.w") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("model config text round trip and validation") {
    ModelConfig cfg = tiny_cfg();
    cfg.variant = Variant::ebsr_sq;
    cfg.sq_w_bits = 2;
    cfg.sq_a_bits = 4;
    ModelConfig back = ModelConfig::from_text(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());

    ModelConfig bad = tiny_cfg();
    bad.scale = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ModelConfig badsq = tiny_cfg();
    badsq.variant = Variant::ebsr_sq;
    badsq.sq_w_bits = 8;
    badsq.sq_a_bits = 8;
    CHECK_THROWS_AS(badsq.validate(), ConfigError);
}
