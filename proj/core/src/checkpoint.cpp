#include "visage/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "visage/digest.hpp"
#include "visage/errors.hpp"

namespace visage {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void i32(std::int32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) i32(d);
        for (double v : t.data) f64(v);
    }
    const std::string& bytes() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

class Reader {
public:
    Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return read_as<std::uint32_t>(); }
    std::uint64_t u64() { return read_as<std::uint64_t>(); }
    std::int32_t i32() { return read_as<std::int32_t>(); }
    double f64() { return read_as<double>(); }
    std::string str() {
        const std::uint32_t n = u32();
        const char* p = take(n);
        return std::string(p, n);
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw IntegrityError("checkpoint: implausible tensor rank");
        std::vector<int> shape;
        std::size_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::int32_t d = i32();
            if (d < 0 || d > (1 << 24)) throw IntegrityError("checkpoint: implausible dimension");
            shape.push_back(d);
            n *= static_cast<std::size_t>(d);
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.data[i] = f64();
        return t;
    }
    bool done() const { return pos_ == size_; }

private:
    template <typename T>
    T read_as() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(std::size_t n) {
        if (pos_ + n > size_) throw IntegrityError("checkpoint: truncated payload");
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void write_payload(Writer& w, const CheckpointData& d) {
    w.str(d.config.dump());
    w.str(d.stage);
    w.u64(d.step);
    w.str(d.rng_state);
    w.u8(d.adapters.enable_encoder_taps ? 1 : 0);
    w.u8(d.adapters.enable_rca ? 1 : 0);
    w.u8(d.adapters.enable_lr_exchange ? 1 : 0);
    w.u8(d.adapters.inject_mid ? 1 : 0);
    w.u8(d.adapters.rca_text ? 1 : 0);
    w.i32(d.adapters.identity_dim);
    w.u32(static_cast<std::uint32_t>(d.sections.size()));
    for (const auto& [name, params] : d.sections) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(params.size()));
        for (const auto& [pname, tensor] : params) {
            w.str(pname);
            w.tensor(tensor);
        }
    }
    w.u8(d.has_optimizer ? 1 : 0);
    if (d.has_optimizer) {
        w.u64(d.optimizer.t);
        w.u32(static_cast<std::uint32_t>(d.optimizer.slots.size()));
        for (const auto& [pname, slot] : d.optimizer.slots) {
            w.str(pname);
            w.tensor(slot.m);
            w.tensor(slot.v);
        }
    }
}

CheckpointData read_payload(Reader& r) {
    CheckpointData d;
    d.config = Config::from_json_text(r.str());
    d.stage = r.str();
    d.step = r.u64();
    d.rng_state = r.str();
    d.adapters.enable_encoder_taps = r.u8() != 0;
    d.adapters.enable_rca = r.u8() != 0;
    d.adapters.enable_lr_exchange = r.u8() != 0;
    d.adapters.inject_mid = r.u8() != 0;
    d.adapters.rca_text = r.u8() != 0;
    d.adapters.identity_dim = r.i32();
    const std::uint32_t nsec = r.u32();
    for (std::uint32_t i = 0; i < nsec; ++i) {
        std::string name = r.str();
        const std::uint32_t nparams = r.u32();
        auto& params = d.sections[name];
        for (std::uint32_t j = 0; j < nparams; ++j) {
            std::string pname = r.str();
            params[pname] = r.tensor();
        }
    }
    d.has_optimizer = r.u8() != 0;
    if (d.has_optimizer) {
        d.optimizer.t = r.u64();
        const std::uint32_t n = r.u32();
        for (std::uint32_t j = 0; j < n; ++j) {
            std::string pname = r.str();
            AdamSlot slot;
            slot.m = r.tensor();
            slot.v = r.tensor();
            d.optimizer.slots[pname] = std::move(slot);
        }
    }
    if (!r.done()) throw IntegrityError("checkpoint: trailing bytes after payload");
    return d;
}

}  // namespace

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
    Writer w;
    write_payload(w, data);
    const std::string& payload = w.bytes();
    const std::uint64_t digest = fnv1a64(payload.data(), payload.size());

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint: cannot open for writing: " + tmp);
        out.write(kMagic, sizeof kMagic);
        const std::uint32_t version = kFormatVersion;
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        const std::uint64_t size = payload.size();
        out.write(reinterpret_cast<const char*>(&size), sizeof size);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
        if (!out) throw IoError("checkpoint: write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    constexpr std::size_t header = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < header + sizeof(std::uint64_t)) {
        throw IntegrityError("checkpoint: file too small: " + path);
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw InvalidState("checkpoint: not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
    if (version != kFormatVersion) {
        throw InvalidState("checkpoint: unsupported format version " + std::to_string(version));
    }
    std::uint64_t payload_size = 0;
    std::memcpy(&payload_size, bytes.data() + sizeof kMagic + sizeof version, sizeof payload_size);
    if (payload_size != bytes.size() - header - sizeof(std::uint64_t)) {
        throw IntegrityError("checkpoint: payload size mismatch: " + path);
    }
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof stored, sizeof stored);
    const std::uint64_t actual = fnv1a64(bytes.data() + header, payload_size);
    if (stored != actual) throw IntegrityError("checkpoint: content digest mismatch: " + path);

    Reader r(bytes.data() + header, payload_size);
    return read_payload(r);
}

namespace {

const char* const kSectionNames[] = {"backbone", "lca", "rca", "rlf", "id_proj"};

}  // namespace

CheckpointData snapshot_model(const ModelBundle& model, const std::string& stage,
                              std::uint64_t step, const std::string& rng_state,
                              const OptimState* opt) {
    CheckpointData d;
    d.config = model.config;
    d.stage = stage;
    d.step = step;
    d.rng_state = rng_state;
    d.adapters = model.adapter_cfg;
    for (const char* sec : kSectionNames) {
        auto& out = d.sections[sec];
        for (const auto& var : model.params.with_prefix(sec)) {
            out[var->name] = var->value;
        }
    }
    if (opt) {
        d.has_optimizer = true;
        d.optimizer = *opt;
    }
    return d;
}

void restore_model(ModelBundle& model, const CheckpointData& ckpt, OptimState* opt) {
    if (ckpt.stage == "stage2" && !model.adapter_cfg.enable_rca) {
        throw ConfigConflict(
            "checkpoint: stage-2 parameters require the reference branch; "
            "adapters.enable_rca is off in the active config");
    }
    if (ckpt.adapters.identity_dim != model.adapter_cfg.identity_dim) {
        throw ConfigConflict("checkpoint: identity embedding width mismatch");
    }
    for (const auto& [sec, params] : ckpt.sections) {
        for (const auto& [pname, tensor] : params) {
            if (!model.params.contains(pname)) {
                throw ConfigConflict("checkpoint: parameter " + pname +
                                     " does not exist in the active model");
            }
            nn::Var var = model.params.find(pname);
            if (!var->value.same_shape(tensor)) {
                throw ConfigConflict("checkpoint: shape mismatch for " + pname + ": model " +
                                     var->value.shape_str() + " vs file " + tensor.shape_str());
            }
            var->value = tensor;
        }
    }
    if (opt) {
        if (ckpt.has_optimizer) {
            *opt = ckpt.optimizer;
        } else {
            *opt = OptimState{};
        }
    }
}

}  // namespace visage
