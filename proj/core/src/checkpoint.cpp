#include "stoic/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "stoic/model.hpp"

namespace stoic {

namespace {

using Kind = CheckpointError::Kind;

uint64_t fnv1a64(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw CheckpointError(Kind::io, "cannot write " + path);
    }
    void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    template <typename T> void pod(T v) { bytes(&v, sizeof(T)); }
    void str(const std::string& s) {
        pod<uint32_t>(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    std::vector<char> buf;
    size_t pos = 0;
    std::string path;

    explicit Reader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary | std::ios::ate);
        if (!in) throw CheckpointError(Kind::io, "cannot open " + p);
        buf.resize(static_cast<size_t>(in.tellg()));
        in.seekg(0);
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!in) throw CheckpointError(Kind::io, "read failed for " + p);
    }
    const char* take(size_t n) {
        if (pos + n > buf.size())
            throw CheckpointError(Kind::truncated, path + ": truncated checkpoint");
        const char* p = buf.data() + pos;
        pos += n;
        return p;
    }
    template <typename T> T pod() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    std::string str() {
        uint32_t n = pod<uint32_t>();
        if (n > (1u << 20)) throw CheckpointError(Kind::malformed, path + ": unreasonable string");
        return std::string(take(n), n);
    }
};

void write_tensor_record(Writer& w, const std::string& path, const Tensor& t) {
    w.str(path);
    w.pod<uint8_t>(t.dtype() == DType::f32 ? 0 : 1);
    w.pod<uint32_t>(static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.pod<int64_t>(t.size(i));
    size_t bytes = static_cast<size_t>(t.numel() * dtype_size(t.dtype()));
    const void* payload = t.dtype() == DType::f32
                              ? static_cast<const void*>(t.data<float>().data())
                              : static_cast<const void*>(t.data<double>().data());
    w.bytes(payload, bytes);
    w.pod<uint64_t>(fnv1a64(payload, bytes));
}

std::pair<std::string, Tensor> read_tensor_record(Reader& r) {
    std::string path = r.str();
    uint8_t tag = r.pod<uint8_t>();
    if (tag > 1) throw CheckpointError(Kind::malformed, r.path + ": unknown dtype tag");
    DType dt = tag == 0 ? DType::f32 : DType::f64;
    uint32_t rank = r.pod<uint32_t>();
    if (rank > 8) throw CheckpointError(Kind::malformed, r.path + ": unreasonable rank");
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = r.pod<int64_t>();
        if (shape[i] < 0 || shape[i] > (1ll << 32))
            throw CheckpointError(Kind::malformed, r.path + ": unreasonable extent");
    }
    Tensor t = Tensor::zeros(shape, dt);
    size_t bytes = static_cast<size_t>(t.numel() * dtype_size(dt));
    const char* payload = r.take(bytes);
    uint64_t digest = fnv1a64(payload, bytes);
    uint64_t stored;
    std::memcpy(&stored, r.take(sizeof(uint64_t)), sizeof(uint64_t));
    if (digest != stored)
        throw CheckpointError(Kind::digest_mismatch,
                              r.path + ": digest mismatch in record '" + path + "'");
    void* dst = dt == DType::f32 ? static_cast<void*>(t.mutable_data<float>().data())
                                 : static_cast<void*>(t.mutable_data<double>().data());
    std::memcpy(dst, payload, bytes);
    return {path, std::move(t)};
}

void write_store(Writer& w, const ParamStore& store) {
    w.pod<uint32_t>(static_cast<uint32_t>(store.size()));
    for (const auto& [path, t] : store) write_tensor_record(w, path, t);
}

ParamStore read_store(Reader& r) {
    uint32_t n = r.pod<uint32_t>();
    ParamStore out;
    for (uint32_t i = 0; i < n; ++i) {
        auto [path, t] = read_tensor_record(r);
        out.insert(path, std::move(t));
    }
    return out;
}

void write_config(Writer& w, const StoicConfig& c) {
    w.pod<uint8_t>(c.stride == StrideVariant::s1 ? 0 : 1);
    w.pod<int32_t>(c.channels);
    w.pod<int32_t>(c.height);
    w.pod<int32_t>(c.width);
    w.pod<int32_t>(c.embed_dim);
    w.pod<int32_t>(c.num_blocks);
    w.pod<int32_t>(c.heads);
    w.pod<double>(c.mlp_ratio);
    w.pod<uint8_t>(c.time_concat == TimeConcat::before_conv ? 0 : 1);
    w.pod<uint8_t>(c.context ? 1 : 0);
    if (c.context) {
        w.pod<int32_t>(c.context->num_tokens);
        w.pod<int32_t>(c.context->token_dim);
    }
    w.pod<uint8_t>(c.decoder_reduce == DecoderReduce::linear ? 0 : 1);
    w.pod<uint8_t>(c.decoder_conv == DecoderConv::conv ? 0 : 1);
    w.pod<uint8_t>(c.initial_nonlinearity == InitialNonlinearity::gelu ? 0 : 1);
    w.pod<uint8_t>(c.initial_norm == InitialNorm::none ? 0 : 1);
}

StoicConfig read_config(Reader& r) {
    StoicConfig c;
    c.stride = r.pod<uint8_t>() == 0 ? StrideVariant::s1 : StrideVariant::s2;
    c.channels = r.pod<int32_t>();
    c.height = r.pod<int32_t>();
    c.width = r.pod<int32_t>();
    c.embed_dim = r.pod<int32_t>();
    c.num_blocks = r.pod<int32_t>();
    c.heads = r.pod<int32_t>();
    c.mlp_ratio = r.pod<double>();
    c.time_concat = r.pod<uint8_t>() == 0 ? TimeConcat::before_conv : TimeConcat::after_conv;
    if (r.pod<uint8_t>()) {
        ContextSpec spec;
        spec.num_tokens = r.pod<int32_t>();
        spec.token_dim = r.pod<int32_t>();
        c.context = spec;
    }
    c.decoder_reduce = r.pod<uint8_t>() == 0 ? DecoderReduce::linear : DecoderReduce::slice;
    c.decoder_conv = r.pod<uint8_t>() == 0 ? DecoderConv::conv : DecoderConv::conv_transpose;
    c.initial_nonlinearity =
        r.pod<uint8_t>() == 0 ? InitialNonlinearity::gelu : InitialNonlinearity::none;
    c.initial_norm = r.pod<uint8_t>() == 0 ? InitialNorm::none : InitialNorm::batch_norm;
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w(path);
    w.bytes("STOI", 4);
    w.pod<uint32_t>(ckpt.version);
    write_config(w, ckpt.config);
    w.pod<int32_t>(ckpt.schedule.T);
    w.pod<double>(ckpt.schedule.beta_start);
    w.pod<double>(ckpt.schedule.beta_end);
    w.pod<double>(ckpt.schedule.sde_beta_min);
    w.pod<double>(ckpt.schedule.sde_beta_max);
    write_store(w, ckpt.params);
    w.pod<uint8_t>(ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        write_store(w, ckpt.adam_m);
        write_store(w, ckpt.adam_v);
    }
    for (uint64_t s : ckpt.rng_state) w.pod<uint64_t>(s);
    w.pod<uint64_t>(ckpt.step);
    w.out.flush();
    if (!w.out.good()) throw CheckpointError(Kind::io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    std::memcpy(magic, r.take(4), 4);
    if (std::memcmp(magic, "STOI", 4) != 0)
        throw CheckpointError(Kind::bad_magic, path + ": bad magic");
    Checkpoint ckpt;
    ckpt.version = r.pod<uint32_t>();
    if (ckpt.version != Checkpoint::kVersion)
        throw CheckpointError(Kind::unsupported_version,
                              path + ": unsupported version " + std::to_string(ckpt.version));
    ckpt.config = read_config(r);
    ckpt.schedule.T = r.pod<int32_t>();
    ckpt.schedule.beta_start = r.pod<double>();
    ckpt.schedule.beta_end = r.pod<double>();
    ckpt.schedule.sde_beta_min = r.pod<double>();
    ckpt.schedule.sde_beta_max = r.pod<double>();
    ckpt.params = read_store(r);
    ckpt.has_optimizer = r.pod<uint8_t>() != 0;
    if (ckpt.has_optimizer) {
        ckpt.adam_m = read_store(r);
        ckpt.adam_v = read_store(r);
    }
    for (auto& s : ckpt.rng_state) s = r.pod<uint64_t>();
    ckpt.step = r.pod<uint64_t>();
    if (r.pos != r.buf.size())
        throw CheckpointError(Kind::malformed, path + ": trailing bytes");
    return ckpt;
}

void validate_checkpoint_shapes(const Checkpoint& ckpt) {
    std::vector<ParamSpec> specs = parameter_specs(ckpt.config);
    if (specs.size() != ckpt.params.size())
        throw CheckpointError(Kind::malformed, "checkpoint parameter count does not match its "
                                               "configuration");
    for (const ParamSpec& spec : specs) {
        if (!ckpt.params.contains(spec.path))
            throw CheckpointError(Kind::malformed, "checkpoint missing parameter " + spec.path);
        if (ckpt.params.at(spec.path).shape() != spec.shape)
            throw CheckpointError(Kind::malformed,
                                  "checkpoint shape mismatch for " + spec.path + ": stored " +
                                      shape_str(ckpt.params.at(spec.path).shape()) + ", expected " +
                                      shape_str(spec.shape));
    }
}

}  // namespace stoic
