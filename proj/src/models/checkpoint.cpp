#include "sizemorph/models/checkpoint.hpp"

#include "sizemorph/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sizemorph::models {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'Z', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

uint64_t fnv1a(const void* data, size_t n, uint64_t h = kFnvOffset) {
    auto p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

torch::Tensor as_f32(const torch::Tensor& t) {
    return t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
}

void copy_into(torch::Tensor& dst, const torch::Tensor& src, const std::string& name) {
    if (dst.sizes() != src.sizes()) {
        std::ostringstream os;
        os << "checkpoint array '" << name << "' has shape " << src.sizes() << ", expected " << dst.sizes();
        throw LoadError(os.str());
    }
    torch::NoGradGuard no_grad;
    dst.copy_(src.to(dst.dtype()));
}

}  // namespace

uint64_t config_hash(const nlohmann::json& config) {
    const auto s = config.dump();
    return fnv1a(s.data(), s.size());
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t parameter_hash(const torch::nn::Module& module) {
    uint64_t h = kFnvOffset;
    for (const auto& p : module.parameters()) {
        auto c = p.detach().contiguous();
        h = fnv1a(c.data_ptr(), c.nbytes(), h);
    }
    return h;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& item : module.named_parameters()) arrays[prefix + "/" + item.key()] = as_f32(item.value());
    for (const auto& item : module.named_buffers()) arrays[prefix + "/" + item.key()] = as_f32(item.value());
}

void Checkpoint::get_module(const std::string& prefix, torch::nn::Module& module) const {
    auto load = [&](const std::string& key, torch::Tensor t) {
        const auto name = prefix + "/" + key;
        auto it = arrays.find(name);
        if (it == arrays.end()) throw LoadError("checkpoint is missing array '" + name + "'");
        copy_into(t, it->second, name);
    };
    for (auto& item : module.named_parameters()) load(item.key(), item.value());
    for (auto& item : module.named_buffers()) load(item.key(), item.value());
}

void Checkpoint::put_adam(const std::string& prefix, torch::optim::Adam& optimizer, const torch::nn::Module& module) {
    auto& state = optimizer.state();
    for (const auto& item : module.named_parameters()) {
        auto it = state.find(item.value().unsafeGetTensorImpl());
        if (it == state.end()) continue;
        auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
        const auto base = prefix + "/" + item.key();
        arrays[base + "/step"] = torch::tensor({static_cast<float>(s.step())});
        arrays[base + "/exp_avg"] = as_f32(s.exp_avg());
        arrays[base + "/exp_avg_sq"] = as_f32(s.exp_avg_sq());
    }
}

void Checkpoint::get_adam(const std::string& prefix, torch::optim::Adam& optimizer,
                          const torch::nn::Module& module) const {
    auto& state = optimizer.state();
    for (const auto& item : module.named_parameters()) {
        const auto base = prefix + "/" + item.key();
        auto step = arrays.find(base + "/step");
        if (step == arrays.end()) {
            state.erase(item.value().unsafeGetTensorImpl());
            continue;
        }
        auto m = arrays.find(base + "/exp_avg");
        auto v = arrays.find(base + "/exp_avg_sq");
        if (m == arrays.end() || v == arrays.end()) throw LoadError("checkpoint has partial optimizer state for '" + base + "'");
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->step(static_cast<int64_t>(step->second.item<float>()));
        auto exp_avg = torch::zeros_like(item.value());
        auto exp_avg_sq = torch::zeros_like(item.value());
        copy_into(exp_avg, m->second, m->first);
        copy_into(exp_avg_sq, v->second, v->first);
        s->exp_avg(exp_avg);
        s->exp_avg_sq(exp_avg_sq);
        state[item.value().unsafeGetTensorImpl()] = std::move(s);
    }
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    auto it = arrays.lower_bound(prefix + "/");
    return it != arrays.end() && it->first.starts_with(prefix + "/");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json entries = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, tensor] : ckpt.arrays) {
        auto t = as_f32(tensor);
        entries.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", payload.size()}});
        payload.append(static_cast<const char*>(t.data_ptr()), t.nbytes());
    }
    nlohmann::json header = {{"arrays", entries},
                             {"config", ckpt.config},
                             {"config_hash", hash_hex(config_hash(ckpt.config))},
                             {"step", ckpt.step},
                             {"rng_state", ckpt.rng_state},
                             {"payload_bytes", payload.size()},
                             {"checksum", hash_hex(fnv1a(payload.data(), payload.size()))}};
    const auto text = header.dump();
    const uint32_t version = kCheckpointVersion;
    const uint64_t header_len = text.size();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw IoError("short write on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto where = " in checkpoint " + path.string();

    constexpr size_t prelude = sizeof kMagic + sizeof(uint32_t) + sizeof(uint64_t);
    if (bytes.size() < prelude || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw LoadError("bad magic" + where);
    }
    uint32_t version;
    uint64_t header_len;
    std::memcpy(&version, bytes.data() + 8, sizeof version);
    std::memcpy(&header_len, bytes.data() + 12, sizeof header_len);
    if (version != kCheckpointVersion) {
        throw LoadError("unsupported version " + std::to_string(version) + where);
    }
    if (header_len > bytes.size() - prelude) throw LoadError("truncated header" + where);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + prelude, bytes.begin() + prelude + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("corrupt header" + where + ": " + e.what());
    }
    const char* payload = bytes.data() + prelude + header_len;
    const size_t payload_len = bytes.size() - prelude - header_len;

    Checkpoint ckpt;
    try {
        if (header.at("payload_bytes").get<size_t>() != payload_len) throw LoadError("truncated payload" + where);
        if (header.at("checksum").get<std::string>() != hash_hex(fnv1a(payload, payload_len))) {
            throw LoadError("payload checksum mismatch" + where);
        }
        ckpt.config = header.at("config");
        if (header.at("config_hash").get<std::string>() != hash_hex(config_hash(ckpt.config))) {
            throw LoadError("config hash does not match stored config" + where);
        }
        ckpt.step = header.at("step").get<int64_t>();
        ckpt.rng_state = header.at("rng_state").get<std::string>();
        for (const auto& e : header.at("arrays")) {
            auto shape = e.at("shape").get<std::vector<int64_t>>();
            const auto offset = e.at("offset").get<size_t>();
            auto t = torch::empty(shape, torch::kFloat32);
            if (offset > payload_len || t.nbytes() > payload_len - offset) {
                throw LoadError("array '" + e.at("name").get<std::string>() + "' overruns payload" + where);
            }
            std::memcpy(t.data_ptr(), payload + offset, t.nbytes());
            ckpt.arrays[e.at("name").get<std::string>()] = t;
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed header" + where + ": " + e.what());
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const nlohmann::json& expected) {
    auto ckpt = load_checkpoint(path);
    const auto have = config_hash(ckpt.config);
    const auto want = config_hash(expected);
    if (have != want) {
        throw LoadError("config hash mismatch in checkpoint " + path.string() + ": file " + hash_hex(have) +
                        ", expected " + hash_hex(want));
    }
    return ckpt;
}

}  // namespace sizemorph::models
