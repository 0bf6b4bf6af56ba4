#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "umt/checkpoint.hpp"
#include "umt/gradcheck.hpp"
#include "umt/umtree.hpp"

using namespace umt;
using namespace umt::testing;

namespace {

ParameterSet small_set(double offset) {
    ParameterSet ps;
    Tensor a = ps.add("layer.W", 2, 3);
    Tensor b = ps.add("layer.b", 1, 3);
    for (std::size_t i = 0; i < a.size(); ++i) a.mutable_values()[i] = offset + 0.1 * static_cast<double>(i);
    for (std::size_t i = 0; i < b.size(); ++i) b.mutable_values()[i] = -offset - static_cast<double>(i);
    return ps;
}

std::string expect_io_error(ParameterSet& ps, const std::string& path) {
    try {
        load_checkpoint(ps, path);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "IoError");
        return e.what();
    }
    ADD_FAILURE() << "expected IoError";
    return {};
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    const auto path = (scratch_dir("ckpt_rt") / "a.ckpt").string();
    ParameterSet src = small_set(1.0 / 3.0);
    save_checkpoint(src, path);
    ParameterSet dst = small_set(0.0);
    load_checkpoint(dst, path);
    for (std::size_t p = 0; p < src.size(); ++p) {
        const auto a = src.items()[p].tensor.values(), b = dst.items()[p].tensor.values();
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    }
}

TEST(Checkpoint, ModelPredictionsSurviveReload) {
    Dataset d{make_sentence("a b c d", {{0, 0, "r", 2, 3}})};
    UMTreeConfig cfg;
    cfg.encoder.emb_dim = cfg.encoder.hidden = 8;
    cfg.limits.threshold = 0.3;
    const Vocab v = Vocab::build(d);
    const RelationDict r = RelationDict::from_dataset(d);
    Seq2UMTree a(cfg, v, r, 5), b(cfg, v, r, 6);
    const auto path = (scratch_dir("ckpt_model") / "m.ckpt").string();
    save_checkpoint(a.params(), path);
    load_checkpoint(b.params(), path);
    EXPECT_EQ(a.training_loss(d[0]).item(), b.training_loss(d[0]).item());
    EXPECT_EQ(a.predict(d[0]), b.predict(d[0]));
}

TEST(Checkpoint, ShapeMismatchNamesParameter) {
    const auto dir = scratch_dir("ckpt_shape");
    ParameterSet src;
    src.add("layer.W", 3, 3);
    src.add("layer.b", 1, 3);
    save_checkpoint(src, (dir / "a.ckpt").string());
    ParameterSet dst = small_set(0.0);
    const std::string msg = expect_io_error(dst, (dir / "a.ckpt").string());
    EXPECT_NE(msg.find("layer.W"), std::string::npos) << msg;
}

TEST(Checkpoint, UnknownAndMissingParametersRejected) {
    const auto dir = scratch_dir("ckpt_names");
    ParameterSet extra = small_set(0.0);
    extra.add("other", 1, 1);
    save_checkpoint(extra, (dir / "extra.ckpt").string());
    ParameterSet dst = small_set(0.0);
    EXPECT_NE(expect_io_error(dst, (dir / "extra.ckpt").string()).find("other"), std::string::npos);

    ParameterSet fewer;
    fewer.add("layer.W", 2, 3);
    save_checkpoint(fewer, (dir / "fewer.ckpt").string());
    EXPECT_NE(expect_io_error(dst, (dir / "fewer.ckpt").string()).find("1 of 2"), std::string::npos);
}

TEST(Checkpoint, TruncatedAndVersionMismatchRejected) {
    const auto dir = scratch_dir("ckpt_trunc");
    const auto path = (dir / "a.ckpt").string();
    save_checkpoint(small_set(1.0), path);
    std::string bytes;
    {
        std::ifstream is(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(is), {});
    }
    {
        std::ofstream os((dir / "short.ckpt").string(), std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    ParameterSet dst = small_set(0.0);
    EXPECT_NE(expect_io_error(dst, (dir / "short.ckpt").string()).find("truncated"), std::string::npos);

    bytes[0] = 9;  // version field, little-endian
    {
        std::ofstream os((dir / "v9.ckpt").string(), std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_NE(expect_io_error(dst, (dir / "v9.ckpt").string()).find("version 9"), std::string::npos);
    expect_io_error(dst, (dir / "missing.ckpt").string());
}
