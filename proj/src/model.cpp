#include "elrt/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace elrt {

// ---------------------------------------------------------------------------
// Rank configuration

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
  });
}

std::size_t parse_rank(std::string_view tok, std::size_t line) {
  tok = trim(tok);
  if (tok.empty() || tok.size() > 9 ||
      !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw RankConfigError(line, "rank '" + std::string(tok) + "' is not a positive integer");
  }
  const std::size_t r = std::stoul(std::string(tok));
  if (r == 0) throw RankConfigError(line, "rank must be at least 1");
  return r;
}

bool is_keep_dense(std::string_view v) {
  return v.size() == 3 && std::toupper(static_cast<unsigned char>(v[0])) == 'N' && v[1] == '/' &&
         std::toupper(static_cast<unsigned char>(v[2])) == 'A';
}

}  // namespace

RankConfigError::RankConfigError(std::size_t line, const std::string& what)
    : std::invalid_argument("rank config line " + std::to_string(line) + ": " + what), line_(line) {}

const RankEntry* RankConfig::find(std::string_view name) const {
  for (const RankEntry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

RankConfig parse_rank_config(std::string_view text) {
  RankConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw RankConfigError(line_no, "expected 'name = r1,r2' or 'name = N/A'");
    const std::string_view name = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!valid_name(name)) throw RankConfigError(line_no, "invalid layer name '" + std::string(name) + "'");
    if (seen.count(name)) throw RankConfigError(line_no, "duplicate layer '" + std::string(name) + "'");
    RankEntry entry{std::string(name), std::nullopt};
    if (!is_keep_dense(value)) {
      const std::size_t comma = value.find(',');
      if (comma == std::string_view::npos) {
        throw RankConfigError(line_no, "expected two ranks separated by a comma, got '" + std::string(value) + "'");
      }
      entry.ranks = std::make_pair(parse_rank(value.substr(0, comma), line_no),
                                   parse_rank(value.substr(comma + 1), line_no));
    }
    seen.insert(entry.name);
    cfg.entries.push_back(std::move(entry));
  }
  return cfg;
}

std::string serialize_rank_config(const RankConfig& cfg) {
  std::ostringstream out;
  for (const RankEntry& e : cfg.entries) {
    out << e.name << " = ";
    if (e.ranks) {
      out << e.ranks->first << ',' << e.ranks->second;
    } else {
      out << "N/A";
    }
    out << '\n';
  }
  return out.str();
}

RankConfig load_rank_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open rank config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_rank_config(buf.str());
}

// ---------------------------------------------------------------------------
// Model structure

void ModelSpec::validate() const {
  if (arch != "resnet" && arch != "cnn") throw std::invalid_argument("unknown architecture '" + arch + "'");
  if (arch == "resnet" && (depth < 8 || depth % 6 != 2)) {
    throw std::invalid_argument("resnet depth " + std::to_string(depth) + " is not 6n+2");
  }
  if (!(width > 0) || !std::isfinite(width)) throw std::invalid_argument("width multiplier must be positive");
  if (classes < 1) throw std::invalid_argument("need at least one class");
  if (in_channels < 1 || in_h < 1 || in_w < 1) throw std::invalid_argument("input extents must be positive");
}

std::size_t scaled_channels(std::size_t base, double width) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(base) * width)));
}

template <typename T>
const std::string& ConvBN<T>::name() const {
  return std::visit([](const auto& c) -> const std::string& { return c.name; }, conv);
}

template <typename T>
const ConvGeometry& ConvBN<T>::geom() const {
  return std::visit([](const auto& c) -> const ConvGeometry& { return c.geom; }, conv);
}

namespace {

template <typename T>
BatchNorm<T> make_bn(std::string name, std::size_t c) {
  return BatchNorm<T>{std::move(name), BasicTensor<T>(Shape{c}, T(1)), BasicTensor<T>(Shape{c}),
                      BasicTensor<T>(Shape{c}), BasicTensor<T>(Shape{c}, T(1))};
}

template <typename T>
ConvBN<T> make_conv_bn(const std::string& conv_name, const std::string& bn_name, const ConvGeometry& g,
                       std::uint64_t seed) {
  return ConvBN<T>{init_dense_conv<T>(conv_name, g, mix_seed(seed, fnv1a(conv_name))), make_bn<T>(bn_name, g.c_out)};
}

template <typename T>
Linear<T> make_linear(std::size_t features, std::size_t classes, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(double(features));
  std::mt19937_64 rng(mix_seed(seed, fnv1a("fc")));
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> w(Shape{classes, features});
  for (T& v : w.data()) v = static_cast<T>(dist(rng));
  return Linear<T>{"fc", std::move(w), BasicTensor<T>(Shape{classes})};
}

template <typename T>
void add_conv_tensors(ConvBN<T>& c, std::vector<NamedTensor<T>>& out) {
  if (auto* d = std::get_if<DenseConv<T>>(&c.conv)) {
    out.push_back({d->name + ".weight", &d->w, TensorRole::DenseKernel});
  } else {
    auto& t = std::get<Tucker2Conv<T>>(c.conv);
    out.push_back({t.name + ".u1", &t.u1, TensorRole::Factor});
    out.push_back({t.name + ".core", &t.core, TensorRole::Core});
    out.push_back({t.name + ".u2", &t.u2, TensorRole::Factor});
  }
  out.push_back({c.bn.name + ".weight", &c.bn.gamma, TensorRole::BatchNormAffine});
  out.push_back({c.bn.name + ".bias", &c.bn.beta, TensorRole::BatchNormAffine});
}

template <typename T>
ad::Var lookup(ad::Tape<T>& t, const Binding<T>& binding, const BasicTensor<T>& tensor) {
  const auto it = binding.find(&tensor);
  return it != binding.end() ? it->second : t.constant(tensor);
}

template <typename T>
ad::Var conv_bn_forward(ad::Tape<T>& t, ConvBN<T>& c, ad::Var x, bool training, const Binding<T>& binding) {
  ad::Var y;
  if (auto* d = std::get_if<DenseConv<T>>(&c.conv)) {
    y = ad::conv2d(t, x, lookup(t, binding, d->w), d->geom.stride, d->geom.padding);
  } else {
    auto& k = std::get<Tucker2Conv<T>>(c.conv);
    y = ad::tucker2_conv(t, x, lookup(t, binding, k.u1), lookup(t, binding, k.core), lookup(t, binding, k.u2),
                         k.geom.stride, k.geom.padding);
  }
  return ad::batch_norm(t, y, lookup(t, binding, c.bn.gamma), lookup(t, binding, c.bn.beta),
                        ad::BatchNormStats<T>{&c.bn.running_mean, &c.bn.running_var, 0.1, 1e-5}, training);
}

template <typename T>
LayerGeometry geometry_of(const ConvBN<T>& c) {
  const ConvGeometry& g = c.geom();
  LayerGeometry out{c.name(), g.k, g.c_in, g.c_out, g.h_out(), g.w_out(), std::nullopt, std::nullopt};
  if (const auto* t = std::get_if<Tucker2Conv<T>>(&c.conv)) {
    out.r1 = t->rank1();
    out.r2 = t->rank2();
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  add_conv_tensors(stem, out);
  for (ConvBN<T>& c : plain) add_conv_tensors(c, out);
  for (ResidualBlock<T>& b : blocks) {
    add_conv_tensors(b.c1, out);
    add_conv_tensors(b.c2, out);
  }
  out.push_back({fc.name + ".weight", &fc.w, TensorRole::Classifier});
  out.push_back({fc.name + ".bias", &fc.b, TensorRole::Classifier});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  for (ConvBN<T>* c : convs()) {
    out.push_back({c->bn.name + ".running_mean", &c->bn.running_mean, TensorRole::BatchNormAffine});
    out.push_back({c->bn.name + ".running_var", &c->bn.running_var, TensorRole::BatchNormAffine});
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::state() {
  std::vector<NamedTensor<T>> out = parameters();
  for (auto& b : buffers()) out.push_back(std::move(b));
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

template <typename T>
std::vector<ConvBN<T>*> Model<T>::convs() {
  std::vector<ConvBN<T>*> out{&stem};
  for (ConvBN<T>& c : plain) out.push_back(&c);
  for (ResidualBlock<T>& b : blocks) {
    out.push_back(&b.c1);
    out.push_back(&b.c2);
  }
  return out;
}

template <typename T>
std::vector<const ConvBN<T>*> Model<T>::convs() const {
  std::vector<const ConvBN<T>*> out;
  for (ConvBN<T>* c : const_cast<Model<T>*>(this)->convs()) out.push_back(c);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const BasicTensor<T>*>> Model<T>::factor_matrices() const {
  std::vector<std::pair<std::string, const BasicTensor<T>*>> out;
  for (const ConvBN<T>* c : convs()) {
    if (const auto* t = std::get_if<Tucker2Conv<T>>(&c->conv)) {
      out.emplace_back(t->name + ".u1", &t->u1);
      out.emplace_back(t->name + ".u2", &t->u2);
    }
  }
  return out;
}

template <typename T>
Binding<T> Model<T>::bind(ad::Tape<T>& t) {
  Binding<T> out;
  const auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) out.emplace(params[i].tensor, t.parameter(ad::ParamId{i}, *params[i].tensor));
  return out;
}

template <typename T>
ad::Var Model<T>::forward(ad::Tape<T>& t, ad::Var x, bool training, const Binding<T>& binding) {
  const Shape& xs = t.shape(x);
  if (xs.size() != 4 || xs[1] != spec.in_channels || xs[2] != spec.in_h || xs[3] != spec.in_w) {
    throw ShapeError("model input must be N x " + std::to_string(spec.in_channels) + " x " +
                     std::to_string(spec.in_h) + " x " + std::to_string(spec.in_w) + ", got " + to_string(xs));
  }
  ad::Var h = ad::relu(t, conv_bn_forward(t, stem, x, training, binding));
  for (ConvBN<T>& c : plain) h = ad::relu(t, conv_bn_forward(t, c, h, training, binding));
  for (ResidualBlock<T>& b : blocks) {
    const ad::Var shortcut =
        (b.stride == 1 && b.in_channels == b.out_channels) ? h : ad::shortcut_pad(t, h, b.out_channels, b.stride);
    ad::Var y = ad::relu(t, conv_bn_forward(t, b.c1, h, training, binding));
    y = conv_bn_forward(t, b.c2, y, training, binding);
    h = ad::relu(t, ad::add(t, y, shortcut));
  }
  const ad::Var pooled = ad::global_avg_pool(t, h);
  return ad::linear(t, pooled, lookup(t, binding, fc.w), lookup(t, binding, fc.b));
}

template <typename T>
BasicTensor<T> Model<T>::predict(const BasicTensor<T>& x) {
  ad::Tape<T> t;
  const ad::Var logits = forward(t, t.constant(x), false, {});
  return t.value(logits);
}

template <typename T>
std::vector<LayerGeometry> Model<T>::flops_geometry() const {
  std::vector<LayerGeometry> out;
  for (const ConvBN<T>* c : convs()) out.push_back(geometry_of(*c));
  out.push_back(LayerGeometry{fc.name, 1, fc.w.dim(1), fc.w.dim(0), 1, 1, std::nullopt, std::nullopt});
  return out;
}

template <typename T>
std::vector<std::string> Model<T>::conv_names() const {
  std::vector<std::string> out;
  for (const ConvBN<T>* c : convs()) out.push_back(c->name());
  return out;
}

// ---------------------------------------------------------------------------
// Builders

template <typename T>
Model<T> build_resnet_cifar(std::size_t depth, double width, std::size_t classes, std::uint64_t seed,
                            std::size_t in_channels, std::size_t in_h, std::size_t in_w) {
  Model<T> m;
  m.spec = ModelSpec{"resnet", depth, width, classes, in_channels, in_h, in_w};
  m.spec.validate();
  const std::size_t per_stage = (depth - 2) / 6;
  std::size_t c = scaled_channels(16, width), h = in_h, w = in_w;
  m.stem = make_conv_bn<T>("conv1", "bn1", ConvGeometry{in_channels, c, 3, 1, 1, h, w}, seed);
  for (std::size_t stage = 0; stage < 3; ++stage) {
    const std::size_t out_c = scaled_channels(16u << stage, width);
    for (std::size_t b = 0; b < per_stage; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(b);
      ResidualBlock<T> block;
      block.name = prefix;
      block.in_channels = c;
      block.out_channels = out_c;
      block.stride = stride;
      const ConvGeometry g1{c, out_c, 3, stride, 1, h, w};
      block.c1 = make_conv_bn<T>(prefix + ".conv1", prefix + ".bn1", g1, seed);
      h = g1.h_out();
      w = g1.w_out();
      block.c2 = make_conv_bn<T>(prefix + ".conv2", prefix + ".bn2", ConvGeometry{out_c, out_c, 3, 1, 1, h, w}, seed);
      m.blocks.push_back(std::move(block));
      c = out_c;
    }
  }
  m.fc = make_linear<T>(c, classes, seed);
  return m;
}

template <typename T>
Model<T> build_cnn(double width, std::size_t classes, std::uint64_t seed, std::size_t in_channels, std::size_t in_h,
                   std::size_t in_w) {
  Model<T> m;
  m.spec = ModelSpec{"cnn", 2, width, classes, in_channels, in_h, in_w};
  m.spec.validate();
  const std::size_t c1 = scaled_channels(16, width), c2 = scaled_channels(32, width);
  m.stem = make_conv_bn<T>("conv1", "bn1", ConvGeometry{in_channels, c1, 3, 1, 1, in_h, in_w}, seed);
  m.plain.push_back(make_conv_bn<T>("layer1.0.conv1", "layer1.0.bn1", ConvGeometry{c1, c2, 3, 2, 1, in_h, in_w}, seed));
  m.fc = make_linear<T>(c2, classes, seed);
  return m;
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.arch == "cnn") return build_cnn<T>(spec.width, spec.classes, seed, spec.in_channels, spec.in_h, spec.in_w);
  return build_resnet_cifar<T>(spec.depth, spec.width, spec.classes, seed, spec.in_channels, spec.in_h, spec.in_w);
}

template <typename T>
void apply_rank_config(Model<T>& model, const RankConfig& cfg, std::uint64_t seed) {
  const auto convs = model.convs();
  // Resolve everything first so a bad entry leaves the model untouched.
  std::vector<std::pair<ConvBN<T>*, const RankEntry*>> plan;
  for (const RankEntry& e : cfg.entries) {
    const auto it = std::find_if(convs.begin(), convs.end(), [&](ConvBN<T>* c) { return c->name() == e.name; });
    if (it == convs.end()) throw std::invalid_argument("rank config names unknown layer '" + e.name + "'");
    if (e.ranks) {
      try {
        check_tucker_ranks((*it)->geom(), e.ranks->first, e.ranks->second);
      } catch (const std::invalid_argument& err) {
        throw std::invalid_argument("layer '" + e.name + "': " + err.what());
      }
    }
    plan.emplace_back(*it, &e);
  }
  for (auto [conv, entry] : plan) {
    const ConvGeometry g = conv->geom();
    const std::uint64_t layer_seed = mix_seed(seed, fnv1a(entry->name));
    if (entry->ranks) {
      conv->conv = init_tucker2<T>(entry->name, g, entry->ranks->first, entry->ranks->second, layer_seed);
    } else if (conv->factorized()) {
      conv->conv = init_dense_conv<T>(entry->name, g, layer_seed);
    }
  }
}

#define ELRT_INSTANTIATE(T)                                                                             \
  template struct ConvBN<T>;                                                                            \
  template class Model<T>;                                                                              \
  template Model<T> build_resnet_cifar(std::size_t, double, std::size_t, std::uint64_t, std::size_t,    \
                                       std::size_t, std::size_t);                                       \
  template Model<T> build_cnn(double, std::size_t, std::uint64_t, std::size_t, std::size_t, std::size_t); \
  template Model<T> build_model(const ModelSpec&, std::uint64_t);                                       \
  template void apply_rank_config(Model<T>&, const RankConfig&, std::uint64_t);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt
