#include "stoic/runconfig.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace stoic {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Value {
    std::string text;
    int line;
};

int64_t parse_int(const Value& v) {
    char* end = nullptr;
    long long r = std::strtoll(v.text.c_str(), &end, 10);
    if (end == v.text.c_str() || *end != '\0')
        throw ConfigError("expected an integer, got '" + v.text + "'", v.line);
    return r;
}

double parse_real(const Value& v) {
    char* end = nullptr;
    double r = std::strtod(v.text.c_str(), &end);
    if (end == v.text.c_str() || *end != '\0')
        throw ConfigError("expected a number, got '" + v.text + "'", v.line);
    return r;
}

bool parse_bool(const Value& v) {
    if (v.text == "true" || v.text == "1" || v.text == "yes") return true;
    if (v.text == "false" || v.text == "0" || v.text == "no") return false;
    throw ConfigError("expected a boolean, got '" + v.text + "'", v.line);
}

[[noreturn]] void bad_enum(const Value& v, const char* options) {
    throw ConfigError("expected one of {" + std::string(options) + "}, got '" + v.text + "'",
                      v.line);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig rc;
    // Post-parse resolution markers.
    bool heads_set = false;
    bool decoder_conv_set = false;
    int context_tokens = 0;
    int context_dim = 8;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
            section = line.substr(1, line.size() - 2);
            if (section != "model" && section != "diffusion" && section != "train" &&
                section != "sample" && section != "data")
                throw ConfigError("unknown section [" + section + "]", line_no);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
        std::string key = trim(line.substr(0, eq));
        Value v{trim(line.substr(eq + 1)), line_no};
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section", line_no);

        if (section == "model") {
            if (key == "stride") {
                if (v.text == "s1") rc.model.stride = StrideVariant::s1;
                else if (v.text == "s2") rc.model.stride = StrideVariant::s2;
                else bad_enum(v, "s1, s2");
            } else if (key == "channels") rc.model.channels = static_cast<int>(parse_int(v));
            else if (key == "height") rc.model.height = static_cast<int>(parse_int(v));
            else if (key == "width") rc.model.width = static_cast<int>(parse_int(v));
            else if (key == "embed_dim") rc.model.embed_dim = static_cast<int>(parse_int(v));
            else if (key == "num_blocks") rc.model.num_blocks = static_cast<int>(parse_int(v));
            else if (key == "heads") {
                rc.model.heads = static_cast<int>(parse_int(v));
                heads_set = rc.model.heads != 0;
            } else if (key == "mlp_ratio") rc.model.mlp_ratio = parse_real(v);
            else if (key == "time_concat") {
                if (v.text == "before_conv") rc.model.time_concat = TimeConcat::before_conv;
                else if (v.text == "after_conv") rc.model.time_concat = TimeConcat::after_conv;
                else bad_enum(v, "before_conv, after_conv");
            } else if (key == "context_tokens") {
                context_tokens = static_cast<int>(parse_int(v));
                if (context_tokens != 0 && context_tokens != 77)
                    throw ConfigError("context_tokens must be 0 (unconditional) or 77", v.line);
            } else if (key == "context_dim") context_dim = static_cast<int>(parse_int(v));
            else if (key == "decoder_reduce") {
                if (v.text == "linear") rc.model.decoder_reduce = DecoderReduce::linear;
                else if (v.text == "slice") rc.model.decoder_reduce = DecoderReduce::slice;
                else bad_enum(v, "linear, slice");
            } else if (key == "decoder_conv") {
                if (v.text == "auto") decoder_conv_set = false;
                else if (v.text == "conv") {
                    rc.model.decoder_conv = DecoderConv::conv;
                    decoder_conv_set = true;
                } else if (v.text == "conv_transpose") {
                    rc.model.decoder_conv = DecoderConv::conv_transpose;
                    decoder_conv_set = true;
                } else bad_enum(v, "auto, conv, conv_transpose");
            } else if (key == "initial_nonlinearity") {
                if (v.text == "gelu") rc.model.initial_nonlinearity = InitialNonlinearity::gelu;
                else if (v.text == "none") rc.model.initial_nonlinearity = InitialNonlinearity::none;
                else bad_enum(v, "gelu, none");
            } else if (key == "initial_norm") {
                if (v.text == "none") rc.model.initial_norm = InitialNorm::none;
                else if (v.text == "batch_norm") rc.model.initial_norm = InitialNorm::batch_norm;
                else bad_enum(v, "none, batch_norm");
            } else throw ConfigError("unknown key '" + key + "' in [model]", line_no);
        } else if (section == "diffusion") {
            if (key == "timesteps") rc.diffusion.T = static_cast<int>(parse_int(v));
            else if (key == "beta_start") rc.diffusion.beta_start = parse_real(v);
            else if (key == "beta_end") rc.diffusion.beta_end = parse_real(v);
            else if (key == "sde_beta_min") rc.diffusion.sde_beta_min = parse_real(v);
            else if (key == "sde_beta_max") rc.diffusion.sde_beta_max = parse_real(v);
            else throw ConfigError("unknown key '" + key + "' in [diffusion]", line_no);
        } else if (section == "train") {
            if (key == "lr") rc.train.lr = parse_real(v);
            else if (key == "beta1") rc.train.beta1 = parse_real(v);
            else if (key == "beta2") rc.train.beta2 = parse_real(v);
            else if (key == "eps") rc.train.eps = parse_real(v);
            else if (key == "weight_decay") rc.train.weight_decay = parse_real(v);
            else if (key == "batch_size") rc.train.batch_size = static_cast<int>(parse_int(v));
            else if (key == "steps") rc.train.steps = parse_int(v);
            else if (key == "cond_dropout") rc.train.cond_dropout = parse_real(v);
            else if (key == "seed") rc.train.seed = static_cast<uint64_t>(parse_int(v));
            else if (key == "guidance_training") rc.train.guidance_training = parse_bool(v);
            else if (key == "checkpoint_interval") rc.train.checkpoint_interval = parse_int(v);
            else throw ConfigError("unknown key '" + key + "' in [train]", line_no);
        } else if (section == "sample") {
            if (key == "sampler") {
                if (v.text == "ancestral") rc.sample.sampler = SamplerKind::ancestral;
                else if (v.text == "em") rc.sample.sampler = SamplerKind::euler_maruyama;
                else bad_enum(v, "ancestral, em");
            } else if (key == "steps") rc.sample.steps = static_cast<int>(parse_int(v));
            else if (key == "guidance") rc.sample.guidance = parse_real(v);
            else if (key == "count") rc.sample.count = static_cast<int>(parse_int(v));
            else if (key == "seed") rc.sample.seed = static_cast<uint64_t>(parse_int(v));
            else throw ConfigError("unknown key '" + key + "' in [sample]", line_no);
        } else if (section == "data") {
            if (key == "source") {
                if (v.text == "two_blobs") rc.data.source = DataSpec::Source::two_blobs;
                else if (v.text == "checker") rc.data.source = DataSpec::Source::checker;
                else if (v.text == "cifar10") rc.data.source = DataSpec::Source::cifar10;
                else bad_enum(v, "two_blobs, checker, cifar10");
            } else if (key == "path") rc.data.path = v.text;
            else if (key == "count") rc.data.count = parse_int(v);
            else if (key == "noise_std") rc.data.noise_std = parse_real(v);
            else if (key == "conditional") rc.data.conditional = parse_bool(v);
            else if (key == "seed") rc.data.seed = static_cast<uint64_t>(parse_int(v));
            else throw ConfigError("unknown key '" + key + "' in [data]", line_no);
        }
    }

    if (context_tokens > 0) {
        ContextSpec spec;
        spec.num_tokens = context_tokens;
        spec.token_dim = context_dim;
        rc.model.context = spec;
    }
    if (!heads_set) rc.model.heads = StoicConfig::default_heads(rc.model.embed_dim);
    if (!decoder_conv_set)
        rc.model.decoder_conv = rc.model.stride == StrideVariant::s1 ? DecoderConv::conv
                                                                     : DecoderConv::conv_transpose;
    rc.model.validate();
    rc.diffusion.make();  // validates the schedule parameters
    rc.train.validate();
    if (rc.sample.steps < 1) throw ConfigError("[sample] steps must be >= 1");
    if (rc.sample.count < 0) throw ConfigError("[sample] count must be >= 0");
    if (rc.data.count < 1) throw ConfigError("[data] count must be >= 1");
    if (rc.data.noise_std < 0) throw ConfigError("[data] noise_std must be >= 0");
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config_text(ss.str());
}

std::string run_config_reference() {
    return R"(# Run configuration: 'key = value' lines under [section] headers,
# '#' starts a comment. Every key is optional and shown with its default.

[model]
stride = s2                  # s1 (K3/S1/P1, dims kept) | s2 (K2/S2/P0, dims halved)
channels = 3
height = 32
width = 32
embed_dim = 512              # L
num_blocks = 12              # N
heads = 0                    # 0 = embed_dim/64 (min 1)
mlp_ratio = 4.0
time_concat = after_conv     # before_conv | after_conv
context_tokens = 0           # 0 = unconditional, 77 = conditioned
context_dim = 8              # features per context token
decoder_reduce = slice       # slice | linear
decoder_conv = auto          # auto | conv | conv_transpose (conv: s1 only)
initial_nonlinearity = gelu  # gelu | none
initial_norm = none          # none | batch_norm

[diffusion]
timesteps = 1000
beta_start = 1e-4
beta_end = 0.02
sde_beta_min = 0.1
sde_beta_max = 20.0

[train]
lr = 1e-4
beta1 = 0.9
beta2 = 0.999
eps = 1e-8
weight_decay = 0.01
batch_size = 128
steps = 5000
cond_dropout = 0.1
seed = 0
guidance_training = false
checkpoint_interval = 1000   # 0 = final checkpoint only

[sample]
sampler = ancestral          # ancestral | em
steps = 1000
guidance = 1.0
count = 16
seed = 0

[data]
source = two_blobs           # two_blobs | checker | cifar10
path =                       # cifar10 batch file
count = 2048                 # generated images for toy sources
noise_std = 0.1
conditional = false          # attach synthetic per-mode contexts
seed = 1
)";
}

Dataset load_dataset(const DataSpec& spec, const StoicConfig& model) {
    if (spec.source == DataSpec::Source::cifar10) {
        if (spec.path.empty()) throw ConfigError("[data] path is required for cifar10");
        return load_cifar10_batch(spec.path);
    }
    ToyOptions opts;
    opts.noise_std = spec.noise_std;
    opts.with_contexts = spec.conditional;
    if (spec.conditional) {
        if (!model.context)
            throw ConfigError("[data] conditional = true requires context_tokens = 77");
        opts.token_dim = model.context->token_dim;
    }
    ToyKind kind =
        spec.source == DataSpec::Source::two_blobs ? ToyKind::two_blobs : ToyKind::checker;
    return gen_toy_dataset(kind, spec.count, {model.channels, model.height, model.width},
                           spec.seed, opts);
}

}  // namespace stoic
