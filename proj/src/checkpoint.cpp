#include "elrt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "elrt/data.hpp"
#include "json.hpp"

namespace elrt {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

const Checkpoint::Array* Checkpoint::find(const std::string& name) const {
  for (const Array& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

namespace {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_floats(float* dst, std::size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) throw FormatError(std::string("checkpoint truncated in ") + what);
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw FormatError(std::string("checkpoint truncated in ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out = "ELRT";
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.value.rank()));
    for (const std::size_t d : a.value.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(a.value.raw()), a.value.size() * sizeof(float));
  }
  put<std::uint64_t>(out, ckpt.metadata.size());
  out += ckpt.metadata;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != "ELRT") throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>("array count");
  Checkpoint ckpt;
  for (std::uint64_t i = 0; i < count; ++i) {
    Checkpoint::Array a;
    a.name = r.take(r.get<std::uint32_t>("name length"), "name");
    const auto ndim = r.get<std::uint32_t>("dim count");
    if (ndim == 0 || ndim > 8) throw FormatError("array " + a.name + " has " + std::to_string(ndim) + " dims");
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto e = r.get<std::uint64_t>("dims");
      if (e == 0 || n > (std::size_t(1) << 40) / e) throw FormatError("array " + a.name + " has an invalid extent");
      shape.push_back(e);
      n *= e;
    }
    Tensor value(shape);
    r.read_floats(value.raw(), n, "payload");
    a.value = std::move(value);
    ckpt.arrays.push_back(std::move(a));
  }
  ckpt.metadata = r.take(r.get<std::uint64_t>("metadata length"), "metadata");
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint metadata");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

namespace {
constexpr const char* kMomentumPrefix = "momentum/";
}

std::string encode_meta(const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["model"] = {{"arch", meta.spec.arch},         {"depth", meta.spec.depth},
                {"width", meta.spec.width},       {"classes", meta.spec.classes},
                {"in_channels", meta.spec.in_channels}, {"in_h", meta.spec.in_h},
                {"in_w", meta.spec.in_w}};
  j["ranks"] = meta.ranks;
  j["seed"] = meta.seed;
  j["epoch"] = meta.epoch;
  j["config_digest"] = meta.config_digest;
  j["train_config"] = meta.train_config;
  return j.dump();
}

CheckpointMeta decode_meta(const std::string& json) {
  try {
    const auto j = nlohmann::json::parse(json);
    CheckpointMeta m;
    const auto& mj = j.at("model");
    m.spec.arch = mj.at("arch").get<std::string>();
    m.spec.depth = mj.at("depth").get<std::size_t>();
    m.spec.width = mj.at("width").get<double>();
    m.spec.classes = mj.at("classes").get<std::size_t>();
    m.spec.in_channels = mj.at("in_channels").get<std::size_t>();
    m.spec.in_h = mj.at("in_h").get<std::size_t>();
    m.spec.in_w = mj.at("in_w").get<std::size_t>();
    m.ranks = j.at("ranks").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch").get<std::size_t>();
    m.config_digest = j.value("config_digest", "");
    m.train_config = j.value("train_config", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

Checkpoint make_checkpoint(Model<float>& model, const OptimizerState<float>& opt, const CheckpointMeta& meta) {
  Checkpoint ckpt;
  for (const auto& nt : model.state()) ckpt.arrays.push_back({nt.name, *nt.tensor});
  for (const auto& nt : model.parameters()) {
    auto it = opt.velocity.find(nt.name);
    if (it != opt.velocity.end()) ckpt.arrays.push_back({kMomentumPrefix + nt.name, it->second});
  }
  ckpt.metadata = encode_meta(meta);
  return ckpt;
}

Restored restore_checkpoint(const Checkpoint& ckpt) {
  CheckpointMeta meta = decode_meta(ckpt.metadata);
  meta.spec.validate();
  Model<float> model = build_model<float>(meta.spec, meta.seed);
  apply_rank_config(model, parse_rank_config(meta.ranks), meta.seed);

  std::map<std::string, const Checkpoint::Array*> by_name;
  for (const auto& a : ckpt.arrays) {
    if (!by_name.emplace(a.name, &a).second) throw FormatError("checkpoint repeats array " + a.name);
  }
  auto state = model.state();
  std::map<std::string, const BasicTensor<float>*> params;
  for (const auto& nt : model.parameters()) params.emplace(nt.name, nt.tensor);
  std::size_t used = 0;
  for (const auto& nt : state) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks array " + nt.name);
    if (it->second->value.shape() != nt.tensor->shape()) {
      throw FormatError("array " + nt.name + " has shape " + to_string(it->second->value.shape()) + ", model needs " +
                        to_string(nt.tensor->shape()));
    }
    ++used;
  }
  OptimizerState<float> opt;
  for (const auto& [name, arr] : by_name) {
    if (name.rfind(kMomentumPrefix, 0) != 0) continue;
    const std::string target = name.substr(std::string(kMomentumPrefix).size());
    auto p = params.find(target);
    if (p == params.end()) throw FormatError("momentum buffer for unknown parameter " + target);
    if (arr->value.shape() != p->second->shape()) throw FormatError("momentum buffer " + name + " has the wrong shape");
    opt.velocity.emplace(target, arr->value);
    ++used;
  }
  if (used != ckpt.arrays.size()) throw FormatError("checkpoint holds arrays the model does not have");
  for (const auto& nt : state) *nt.tensor = by_name.at(nt.name)->value;
  return {std::move(model), std::move(opt), std::move(meta)};
}

}  // namespace elrt
