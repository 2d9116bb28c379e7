#include "elrt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace elrt {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(lambda_d >= 0.0)) throw std::invalid_argument("lambda_d must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("base_lr must be >= 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  reg.validate();
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size=" << batch_size << " momentum=" << momentum << " weight_decay=" << weight_decay
     << " base_lr=" << base_lr << " epochs=" << epochs << " lambda_d=" << lambda_d << " reg=" << to_string(reg.kind)
     << " rho=" << reg.rho << " power_iters=" << reg.power_iters << " power_tol=" << reg.power_tol
     << " power_seed=" << reg.power_seed << " seed=" << seed << " augment=" << augment
     << " bn_weight_decay=" << bn_weight_decay;
  return os.str();
}

std::string TrainConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(describe())));
  return buf;
}

std::string Metrics::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,lr,train_loss,reg_loss,test_acc,mean_residual,excess_residual\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.reg_loss << ',' << e.test_acc << ','
       << e.residual << ',' << e.excess_residual << '\n';
  }
  return os.str();
}

std::string Metrics::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["reg_loss"] = e.reg_loss;
    j["test_acc"] = e.test_acc;
    j["mean_residual"] = e.residual;
    j["excess_residual"] = e.excess_residual;
    out += j.dump() + '\n';
  }
  return out;
}

namespace {

// Training allocates and frees the same large activation buffers every step. Served from
// mmap they would be returned to the kernel and faulted in again each time.
void keep_large_allocations_on_heap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

template <typename T>
ad::Var bound_or_constant(ad::Tape<T>& t, const Binding<T>& binding, const BasicTensor<T>* p) {
  auto it = binding.find(p);
  return it == binding.end() ? t.constant(*p) : it->second;
}

}  // namespace

template <typename T>
LossTerms total_loss(ad::Tape<T>& t, Model<T>& model, const Binding<T>& binding, ad::Var x,
                     std::span<const int> labels, const TrainConfig& cfg, bool training) {
  const ad::Var logits = model.forward(t, x, training, binding);
  const ad::Var ce = ad::cross_entropy(t, logits, labels);
  if (cfg.lambda_d == 0.0 || cfg.reg.kind == RegKind::None) {
    return {ce, ce, t.constant(BasicTensor<T>::scalar(T(0)))};
  }
  std::optional<ad::Var> acc;
  for (const auto& [name, mat] : model.factor_matrices()) {
    const ad::Var r = ad::regularizer(t, bound_or_constant(t, binding, mat), cfg.reg);
    acc = acc ? ad::add(t, *acc, r) : r;
  }
  if (!acc) return {ce, ce, t.constant(BasicTensor<T>::scalar(T(0)))};
  const ad::Var reg = ad::scale(t, *acc, cfg.lambda_d);
  return {ad::add(t, ce, reg), ce, reg};
}

template <typename T>
void sgd_step(const std::vector<NamedTensor<T>>& params, const ad::GradientSet<T>& grads,
              OptimizerState<T>& state, double lr, const TrainConfig& cfg) {
  for (const auto& [id, g] : grads) {
    const auto i = static_cast<std::size_t>(id);
    if (i >= params.size()) throw std::invalid_argument("gradient for unknown parameter index " + std::to_string(i));
    if (g.shape() != params[i].tensor->shape()) {
      throw ShapeError("gradient shape " + to_string(g.shape()) + " does not match " + params[i].name);
    }
    for (const T v : g.data()) {
      if (!std::isfinite(v)) throw NonFiniteError("non-finite gradient in " + params[i].name);
    }
  }
  const T m = T(cfg.momentum);
  const T step = T(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& theta = *params[i].tensor;
    const T wd = (params[i].role == TensorRole::BatchNormAffine && !cfg.bn_weight_decay) ? T(0) : T(cfg.weight_decay);
    const BasicTensor<T>* g = grads.find(ad::ParamId{i});
    auto [it, fresh] = state.velocity.try_emplace(params[i].name, theta.shape());
    BasicTensor<T>& v = it->second;
    if (v.shape() != theta.shape()) throw ShapeError("momentum buffer shape mismatch for " + params[i].name);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const T gk = g ? (*g)[k] : T(0);
      v[k] = m * v[k] + gk + wd * theta[k];
      theta[k] = theta[k] - step * v[k];
    }
  }
}

double cosine_lr(std::size_t t, std::size_t total, double base) {
  if (t >= total) {
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(t) + " outside [0, " + std::to_string(total) + ")");
  }
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * double(t) / double(total)));
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

template <typename T>
double mean_residual(const Model<T>& model) {
  const auto mats = model.factor_matrices();
  if (mats.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [name, m] : mats) s += orthogonality_residual(*m);
  return s / double(mats.size());
}

template <typename T>
double mean_excess_residual(const Model<T>& model) {
  const auto mats = model.factor_matrices();
  if (mats.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [name, m] : mats) s += excess_orthogonality_residual(*m);
  return s / double(mats.size());
}

template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected [N, C], got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = int(best);
  }
  return out;
}

double evaluate(Model<float>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    auto [x, y] = data.gather(idx);
    const auto pred = argmax_rows(model.predict(x));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
  }
  return double(correct) / double(data.size());
}

Metrics train(Model<float>& model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
              OptimizerState<float>& state, std::size_t first_epoch, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  keep_large_allocations_on_heap();
  train_set.validate();
  Metrics metrics;
  metrics.initial_residual = mean_residual(model);
  metrics.initial_excess_residual = mean_excess_residual(model);
  std::vector<std::size_t> batch_idx;
  for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr);
    const auto order = epoch_order(train_set.size(), cfg.seed, epoch);
    double loss_sum = 0.0, reg_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_idx.assign(order.begin() + long(start), order.begin() + long(end));
      auto [x, y] = train_set.gather(batch_idx);
      if (cfg.augment) x = augment_crop_flip(x, mix_seed(mix_seed(cfg.seed, epoch), batches));
      ad::Tape<float> tape;
      const Binding<float> binding = model.bind(tape);
      const ad::Var xv = tape.constant(std::move(x));
      const LossTerms loss = total_loss(tape, model, binding, xv, y, cfg, true);
      const double lv = tape.value(loss.total)[0];
      if (!std::isfinite(lv)) throw NonFiniteError("non-finite loss in epoch " + std::to_string(epoch + 1));
      loss_sum += lv;
      reg_sum += tape.value(loss.reg)[0];
      const auto grads = tape.backward(loss.total);
      sgd_step(model.parameters(), grads, state, lr, cfg);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / double(batches);
    rec.reg_loss = reg_sum / double(batches);
    rec.test_acc = evaluate(model, test_set);
    rec.residual = mean_residual(model);
    rec.excess_residual = mean_excess_residual(model);
    metrics.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return metrics;
}

double AblationRun::final_accuracy() const { return metrics.epochs.empty() ? 0.0 : metrics.epochs.back().test_acc; }

double AblationRun::final_excess_residual() const {
  return metrics.epochs.empty() ? metrics.initial_excess_residual : metrics.epochs.back().excess_residual;
}

std::vector<AblationRun> run_ablation(const ModelSpec& spec, const RankConfig& ranks, const TrainConfig& cfg,
                                      std::span<const RegKind> kinds, std::span<const std::uint64_t> seeds,
                                      const Dataset& train_set, const Dataset& test_set,
                                      const std::function<void(const AblationRun&)>& on_run) {
  std::vector<AblationRun> runs;
  for (const RegKind kind : kinds) {
    for (const std::uint64_t seed : seeds) {
      Model<float> model = build_model<float>(spec, seed);
      apply_rank_config(model, ranks, seed);
      TrainConfig run_cfg = cfg;
      run_cfg.reg.kind = kind;
      run_cfg.seed = seed;
      OptimizerState<float> state;
      AblationRun run{kind, seed, train(model, train_set, test_set, run_cfg, state), };
      if (on_run) on_run(run);
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

#define ELRT_INSTANTIATE(T)                                                                                   \
  template LossTerms total_loss(ad::Tape<T>&, Model<T>&, const Binding<T>&, ad::Var, std::span<const int>,    \
                                const TrainConfig&, bool);                                                    \
  template void sgd_step(const std::vector<NamedTensor<T>>&, const ad::GradientSet<T>&, OptimizerState<T>&,   \
                         double, const TrainConfig&);                                                         \
  template double mean_residual(const Model<T>&);                                                             \
  template double mean_excess_residual(const Model<T>&);                                                      \
  template std::vector<int> argmax_rows(const BasicTensor<T>&);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)

}  // namespace elrt
