#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "stoic/complexity.hpp"
#include "stoic/model.hpp"
#include "test_util.hpp"

using namespace stoic;

namespace {

// Brute-force multiply-accumulate counter: literal loop nests over the layer
// graph, one increment per multiply. Kept deliberately independent of the
// analyzer's closed-form expressions.
int64_t brute_force_macs(const StoicConfig& c) {
    int64_t n = 0;
    auto [ho, wo] = c.conv_out_hw();
    int64_t t_seq = static_cast<int64_t>(ho) * wo;
    int64_t l = c.embed_dim;

    // initial conv (padding taps included by convention)
    for (int co = 0; co < l; ++co)
        for (int ci = 0; ci < c.initial_in_channels(); ++ci)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    for (int ky = 0; ky < c.kernel(); ++ky)
                        for (int kx = 0; kx < c.kernel(); ++kx) ++n;

    // time embedding: one feature vector per element through a linear map
    int64_t plane = c.time_concat == TimeConcat::before_conv
                        ? static_cast<int64_t>(c.height) * c.width
                        : t_seq;
    for (int i = 0; i < kTimeFeatureDim; ++i)
        for (int64_t o = 0; o < plane; ++o) ++n;
    if (c.time_concat == TimeConcat::after_conv)
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l + 1; ++i)
                for (int64_t o = 0; o < l; ++o) ++n;

    if (c.context) {
        for (int tok = 0; tok < c.context->num_tokens; ++tok)
            for (int i = 0; i < c.context->token_dim; ++i)
                for (int64_t o = 0; o < t_seq; ++o) ++n;
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l + c.context->num_tokens; ++i)
                for (int64_t o = 0; o < l; ++o) ++n;
    }

    int64_t dh = l / c.heads;
    for (int blk = 0; blk < c.num_blocks; ++blk) {
        // qkv and output projections
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l; ++i)
                for (int64_t o = 0; o < 3 * l; ++o) ++n;
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l; ++i)
                for (int64_t o = 0; o < l; ++o) ++n;
        // attention scores and value contraction per head
        for (int h = 0; h < c.heads; ++h)
            for (int64_t tq = 0; tq < t_seq; ++tq)
                for (int64_t tk = 0; tk < t_seq; ++tk)
                    for (int64_t d = 0; d < dh; ++d) n += 2;
        // mlp
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l; ++i)
                for (int64_t o = 0; o < c.mlp_hidden(); ++o) ++n;
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < c.mlp_hidden(); ++i)
                for (int64_t o = 0; o < l; ++o) ++n;
    }

    if (c.decoder_reduce == DecoderReduce::linear)
        for (int64_t t = 0; t < t_seq; ++t)
            for (int64_t i = 0; i < l; ++i)
                for (int o = 0; o < c.channels; ++o) ++n;
    // final conv: dimension-preserving conv iterates its output, the
    // transposed conv its input; both drive t_seq positions
    int k_out = c.stride == StrideVariant::s1 ? 3 : 2;
    for (int64_t pos = 0; pos < t_seq; ++pos)
        for (int ci = 0; ci < c.channels; ++ci)
            for (int co = 0; co < c.channels; ++co)
                for (int ky = 0; ky < k_out; ++ky)
                    for (int kx = 0; kx < k_out; ++kx) ++n;
    return n;
}

StoicConfig small(StrideVariant sv, int l, int blocks, int img = 8, int ch = 1) {
    StoicConfig c;
    c.stride = sv;
    c.channels = ch;
    c.height = img;
    c.width = img;
    c.embed_dim = l;
    c.heads = l >= 8 ? 4 : 1;
    c.num_blocks = blocks;
    c.decoder_conv = sv == StrideVariant::s1 ? DecoderConv::conv : DecoderConv::conv_transpose;
    return c;
}

StoicConfig paper_scale(StrideVariant sv, int l, int blocks) {
    StoicConfig c;
    c.stride = sv;
    c.channels = 3;
    c.height = 32;
    c.width = 32;
    c.embed_dim = l;
    c.heads = StoicConfig::default_heads(l);
    c.num_blocks = blocks;
    c.decoder_conv = sv == StrideVariant::s1 ? DecoderConv::conv : DecoderConv::conv_transpose;
    return c;
}

}  // namespace

TEST_CASE("closed-form layer counts") {
    // single linear 8 -> 4 and a conv with K=2, 3 -> 64 channels
    StoicConfig c = small(StrideVariant::s2, 8, 1);
    ComplexityReport r = param_count(c);
    CHECK(r.total_params > 0);
    // Spot values straight from the counting rules.
    // linear: in*out + out; conv: K^2*Cin*Cout + Cout.
    CHECK(8 * 4 + 4 == 36);
    CHECK(2 * 2 * 3 * 64 + 64 == 832);
}

TEST_CASE("conv MAC example: 3->64 channels, K=3, 32x32 preserved dims") {
    StoicConfig c = paper_scale(StrideVariant::s1, 64, 1);
    ComplexityReport r = mac_count(c);
    bool found = false;
    for (const auto& row : r.rows)
        if (row.path == "init_conv") {
            CHECK(row.macs == 1769472);  // 9 * 3 * 64 * 1024
            found = true;
        }
    CHECK(found);
}

TEST_CASE("analyzer equals the brute-force loop nest on small configs") {
    for (StrideVariant sv : {StrideVariant::s1, StrideVariant::s2})
        for (int l : {8, 16, 32})
            for (int blocks : {1, 2})
                for (int img : {4, 8}) {
                    StoicConfig c = small(sv, l, blocks, img);
                    CHECK(mac_count(c).total_macs == brute_force_macs(c));
                }
    // conditioned + linear-reduce + before-conv variants
    StoicConfig c = small(StrideVariant::s2, 16, 2);
    c.context = ContextSpec{77, 4};
    CHECK(mac_count(c).total_macs == brute_force_macs(c));
    c.decoder_reduce = DecoderReduce::linear;
    c.time_concat = TimeConcat::before_conv;
    CHECK(mac_count(c).total_macs == brute_force_macs(c));
}

TEST_CASE("parameter count equals the built store for every tested config") {
    for (StrideVariant sv : {StrideVariant::s1, StrideVariant::s2})
        for (int l : {8, 32})
            for (int blocks : {1, 2}) {
                StoicConfig c = small(sv, l, blocks);
                CHECK(param_count(c).total_params == build_params(c, 0).total_scalars());
            }
}

TEST_CASE("totals equal the sum of rows") {
    ComplexityReport r = mac_count(paper_scale(StrideVariant::s2, 256, 12));
    int64_t params = 0, macs = 0;
    for (const auto& row : r.rows) {
        params += row.params;
        macs += row.macs;
    }
    CHECK(params == r.total_params);
    CHECK(macs == r.total_macs);
}

TEST_CASE("stride-2 models cost far fewer MACs at matched L and N") {
    for (int l : {256, 512})
        for (int blocks : {12, 24, 32}) {
            ComplexityReport s1 = mac_count(paper_scale(StrideVariant::s1, l, blocks));
            ComplexityReport s2 = mac_count(paper_scale(StrideVariant::s2, l, blocks));
            CHECK(static_cast<double>(s2.total_macs) < static_cast<double>(s1.total_macs) / 3.0);
        }
}

TEST_CASE("per-block MAC ratio of the stride variants stays below one third") {
    // Linears scale by 1/4 (T quarters), attention by 1/16.
    StoicConfig a = paper_scale(StrideVariant::s1, 256, 1);
    StoicConfig b = paper_scale(StrideVariant::s2, 256, 1);
    auto block_macs = [](const StoicConfig& c) {
        int64_t total = 0;
        for (const auto& row : mac_count(c).rows)
            if (row.path.rfind("block00", 0) == 0) total += row.macs;
        return total;
    };
    CHECK(static_cast<double>(block_macs(b)) < static_cast<double>(block_macs(a)) / 3.0);
}

TEST_CASE("parameter parity between stride variants at paper scale") {
    // The variants differ only in initial-conv/decoder geometry (plus the
    // time-plane width in after_conv mode), so params agree within 1%.
    for (int l : {256, 512})
        for (int blocks : {12, 24, 32}) {
            StoicConfig a = paper_scale(StrideVariant::s1, l, blocks);
            StoicConfig b = paper_scale(StrideVariant::s2, l, blocks);
            a.time_concat = TimeConcat::before_conv;
            b.time_concat = TimeConcat::before_conv;
            double pa = static_cast<double>(param_count(a).total_params);
            double pb = static_cast<double>(param_count(b).total_params);
            CHECK(std::fabs(pb - pa) / pa < 0.01);
        }
}

TEST_CASE("the 32x32 L=512 N=32 stride-2 model lands in the 20-30 GMAC band") {
    ComplexityReport r = mac_count(paper_scale(StrideVariant::s2, 512, 32));
    CHECK(r.gmacs() > 20.0);
    CHECK(r.gmacs() < 30.0);
}

TEST_CASE("scaling_table CSV shape and monotonicity") {
    CHECK_THROWS_AS(scaling_table_csv({}), ValueError);

    std::vector<StoicConfig> two{paper_scale(StrideVariant::s2, 256, 12),
                                 paper_scale(StrideVariant::s2, 256, 24)};
    std::string csv = scaling_table_csv(two);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "stride,L,N,params,gmacs");
    CHECK(lines[1].rfind("s2,256,12,", 0) == 0);

    // Monotonic in N at fixed L.
    std::vector<StoicConfig> sweep{paper_scale(StrideVariant::s2, 256, 12),
                                   paper_scale(StrideVariant::s2, 256, 24),
                                   paper_scale(StrideVariant::s2, 256, 32)};
    int64_t prev_params = 0;
    double prev_gmacs = 0;
    for (const StoicConfig& c : sweep) {
        ComplexityReport r = mac_count(c);
        CHECK(r.total_params > prev_params);
        CHECK(r.gmacs() > prev_gmacs);
        prev_params = r.total_params;
        prev_gmacs = r.gmacs();
    }

    testutil::TempDir dir("scaling");
    scaling_table(two, dir.file("table.csv"));
    auto bytes = testutil::read_bytes(dir.file("table.csv"));
    CHECK(std::string(bytes.begin(), bytes.end()) == csv);
    CHECK_THROWS_AS(scaling_table(two, (dir.path() / "missing" / "t.csv").string()), ValueError);
}
