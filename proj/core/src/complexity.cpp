#include "stoic/complexity.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stoic/model.hpp"

namespace stoic {

const char* kMacConventionNote =
    "1 MAC = one multiply-accumulate; GMAC = 1e9 MACs; padding taps counted; "
    "normalization/softmax/activations count 0 MACs";

std::string ComplexityReport::to_string() const {
    std::ostringstream os;
    char buf[256];
    os << "# " << kMacConventionNote << "\n";
    std::snprintf(buf, sizeof(buf), "%-28s %14s %16s\n", "layer", "params", "macs");
    os << buf;
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %14lld %16lld\n", r.path.c_str(),
                      static_cast<long long>(r.params), static_cast<long long>(r.macs));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-28s %14lld %16lld (%.4f GMAC)\n", "total",
                  static_cast<long long>(total_params), static_cast<long long>(total_macs),
                  gmacs());
    os << buf;
    return os.str();
}

namespace {

struct Counter {
    ComplexityReport report;
    int64_t batch = 1;
    bool with_macs = true;

    void add(const std::string& path, int64_t params, int64_t macs) {
        int64_t m = with_macs ? macs * batch : 0;
        report.rows.push_back({path, params, m});
        report.total_params += params;
        report.total_macs += m;
    }
    // linear applied at `positions` positions per batch element
    void linear(const std::string& path, int64_t in, int64_t out, int64_t positions) {
        add(path, in * out + out, positions * in * out);
    }
    void conv(const std::string& path, int64_t k, int64_t c_in, int64_t c_out, int64_t out_hw) {
        add(path, k * k * c_in * c_out + c_out, k * k * c_in * c_out * out_hw);
    }
    void layer_norm(const std::string& path, int64_t width) { add(path, 2 * width, 0); }
    void attention(const std::string& path, int64_t l, int64_t t) {
        // QKV + output projections, then score and value contractions.
        add(path, 4 * l * l + 4 * l, 4 * t * l * l + 2 * t * t * l);
    }
};

ComplexityReport analyze(const StoicConfig& c, int batch, bool with_macs) {
    c.validate();
    Counter ct;
    ct.batch = batch;
    ct.with_macs = with_macs;

    int64_t l = c.embed_dim;
    int64_t t_seq = c.seq_len();
    auto [ho, wo] = c.conv_out_hw();

    ct.conv("init_conv", c.kernel(), c.initial_in_channels(), l,
            static_cast<int64_t>(ho) * wo);
    if (c.initial_norm == InitialNorm::batch_norm) ct.add("init_norm", 2 * l, 0);

    int64_t time_plane = c.time_concat == TimeConcat::before_conv
                             ? static_cast<int64_t>(c.height) * c.width
                             : t_seq;
    // The time projection maps one feature vector per batch element.
    ct.linear("time_embed", kTimeFeatureDim, time_plane, 1);
    if (c.time_concat == TimeConcat::after_conv) ct.linear("time_proj", l + 1, l, t_seq);

    if (c.context) {
        ct.linear("context_embed", c.context->token_dim, t_seq, c.context->num_tokens);
        ct.linear("context_proj", l + c.context->num_tokens, l, t_seq);
    }

    for (int i = 0; i < c.num_blocks; ++i) {
        std::string p = block_path(i);
        ct.layer_norm(p + "/ln1", l);
        ct.attention(p + "/attn", l, t_seq);
        ct.layer_norm(p + "/ln2", l);
        ct.linear(p + "/mlp/fc1", l, c.mlp_hidden(), t_seq);
        ct.linear(p + "/mlp/fc2", c.mlp_hidden(), l, t_seq);
    }

    ct.layer_norm("decoder/ln", l);
    if (c.decoder_reduce == DecoderReduce::linear)
        ct.linear("decoder/reduce", l, c.channels, t_seq);
    int k_out = c.stride == StrideVariant::s1 ? 3 : 2;
    // Both decoder variants tap k^2*C^2 at each of the t_seq driving
    // positions: the conv iterates its (dimension-preserving) output, the
    // transposed conv its input.
    ct.conv("decoder/out_conv", k_out, c.channels, c.channels, t_seq);

    return ct.report;
}

}  // namespace

ComplexityReport param_count(const StoicConfig& config) { return analyze(config, 1, false); }

ComplexityReport mac_count(const StoicConfig& config, int batch) {
    if (batch < 1) throw ValueError("mac_count: batch must be >= 1");
    return analyze(config, batch, true);
}

std::string scaling_table_csv(const std::vector<StoicConfig>& configs) {
    if (configs.empty()) throw ValueError("scaling_table: empty configuration list");
    std::ostringstream os;
    os << "stride,L,N,params,gmacs\n";
    char buf[128];
    for (const StoicConfig& c : configs) {
        ComplexityReport r = mac_count(c);
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%lld,%.9g\n", to_string(c.stride), c.embed_dim,
                      c.num_blocks, static_cast<long long>(r.total_params), r.gmacs());
        os << buf;
    }
    return os.str();
}

void scaling_table(const std::vector<StoicConfig>& configs, const std::string& output_path) {
    std::string csv = scaling_table_csv(configs);
    std::ofstream out(output_path, std::ios::binary);
    if (!out) throw ValueError("scaling_table: cannot write " + output_path);
    out << csv;
    if (!out.good()) throw ValueError("scaling_table: write failed for " + output_path);
}

}  // namespace stoic
