#include "elrt/flops.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace elrt {

void LayerGeometry::validate() const {
  if (d == 0 || s == 0 || t == 0 || h_out == 0 || w_out == 0) {
    throw std::invalid_argument("layer " + name + ": geometry extents must be positive");
  }
  if (r1.has_value() != r2.has_value()) {
    throw std::invalid_argument("layer " + name + ": ranks must be given together");
  }
  if (r1 && (*r1 == 0 || *r2 == 0)) throw std::invalid_argument("layer " + name + ": ranks must be positive");
}

LayerFlops layer_flops(const LayerGeometry& g) {
  g.validate();
  const std::uint64_t hw = std::uint64_t(g.h_out) * g.w_out;
  const std::uint64_t d2 = std::uint64_t(g.d) * g.d;
  LayerFlops f;
  f.dense = d2 * g.s * g.t * hw;
  f.factorized = g.factorized() ? (std::uint64_t(g.s) * *g.r1 + d2 * *g.r1 * *g.r2 + std::uint64_t(g.t) * *g.r2) * hw
                                : f.dense;
  return f;
}

std::uint64_t layer_dense_params(const LayerGeometry& g) {
  return std::uint64_t(g.d) * g.d * g.s * g.t;
}

std::uint64_t layer_params(const LayerGeometry& g) {
  if (!g.factorized()) return layer_dense_params(g);
  return std::uint64_t(g.s) * *g.r1 + std::uint64_t(g.d) * g.d * *g.r1 * *g.r2 + std::uint64_t(g.t) * *g.r2;
}

FlopsReport model_reduction(std::span<const LayerGeometry> layers) {
  if (layers.empty()) throw std::invalid_argument("model_reduction: empty layer list");
  FlopsReport r;
  for (const LayerGeometry& g : layers) {
    FlopsRow row{g, layer_flops(g), layer_dense_params(g), layer_params(g)};
    r.dense_total += row.flops.dense;
    r.factorized_total += row.flops.factorized;
    r.dense_params += row.dense_params;
    r.params += row.params;
    r.layers.push_back(std::move(row));
  }
  r.inference_reduction = double(r.dense_total) / double(r.factorized_total);
  r.param_reduction = double(r.dense_params) / double(r.params);
  r.training_reduction = training_reduction(TrainingMethod::ELRT, double(r.dense_total), double(r.factorized_total));
  return r;
}

std::string FlopsReport::to_json() const {
  nlohmann::ordered_json j;
  j["layers"] = nlohmann::json::array();
  for (const FlopsRow& row : layers) {
    nlohmann::ordered_json l;
    l["name"] = row.geom.name;
    l["d"] = row.geom.d;
    l["s"] = row.geom.s;
    l["t"] = row.geom.t;
    l["h_out"] = row.geom.h_out;
    l["w_out"] = row.geom.w_out;
    if (row.geom.factorized()) {
      l["r1"] = *row.geom.r1;
      l["r2"] = *row.geom.r2;
    } else {
      l["r1"] = nullptr;
      l["r2"] = nullptr;
    }
    l["dense_flops"] = row.flops.dense;
    l["flops"] = row.flops.factorized;
    l["dense_params"] = row.dense_params;
    l["params"] = row.params;
    j["layers"].push_back(l);
  }
  j["dense_flops"] = dense_total;
  j["flops"] = factorized_total;
  j["dense_params"] = dense_params;
  j["params"] = params;
  j["inference_reduction"] = inference_reduction;
  j["param_reduction"] = param_reduction;
  j["training_method"] = training_method;
  j["training_reduction"] = training_reduction;
  return j.dump(2);
}

std::string FlopsReport::to_table() const {
  std::size_t name_w = 5;
  for (const FlopsRow& row : layers) name_w = std::max(name_w, row.geom.name.size());
  std::ostringstream out;
  out << std::left << std::setw(int(name_w)) << "layer" << std::right << std::setw(3) << "D" << std::setw(6)
      << "S" << std::setw(6) << "T" << std::setw(5) << "H'" << std::setw(5) << "W'" << std::setw(10) << "ranks"
      << std::setw(14) << "dense MACs" << std::setw(14) << "MACs" << std::setw(9) << "ratio" << '\n';
  for (const FlopsRow& row : layers) {
    const LayerGeometry& g = row.geom;
    const std::string ranks = g.factorized() ? std::to_string(*g.r1) + "," + std::to_string(*g.r2) : "dense";
    out << std::left << std::setw(int(name_w)) << g.name << std::right << std::setw(3) << g.d << std::setw(6) << g.s
        << std::setw(6) << g.t << std::setw(5) << g.h_out << std::setw(5) << g.w_out << std::setw(10) << ranks
        << std::setw(14) << row.flops.dense << std::setw(14) << row.flops.factorized << std::setw(9)
        << std::fixed << std::setprecision(3) << double(row.flops.dense) / double(row.flops.factorized) << '\n';
  }
  out << std::setprecision(4);
  out << "total dense MACs:     " << dense_total << '\n'
      << "total MACs:           " << factorized_total << '\n'
      << "inference reduction:  " << inference_reduction << "x\n"
      << "dense parameters:     " << dense_params << '\n'
      << "parameters:           " << params << '\n'
      << "parameter reduction:  " << param_reduction << "x\n"
      << "training reduction (" << training_method << "): " << training_reduction << "x\n";
  return out.str();
}

TrainingMethod parse_training_method(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (s == "dense") return TrainingMethod::Dense;
  if (s == "pruning") return TrainingMethod::Pruning;
  if (s == "lowrank-comp") return TrainingMethod::LowRankCompression;
  if (s == "growefficient") return TrainingMethod::GrowEfficient;
  if (s == "backsparse") return TrainingMethod::SparseBackward;
  if (s == "elrt") return TrainingMethod::ELRT;
  throw std::invalid_argument("unknown training method '" + std::string(text) +
                              "' (expected dense|pruning|lowrank-comp|growefficient|backsparse|elrt)");
}

std::string_view to_string(TrainingMethod m) {
  switch (m) {
    case TrainingMethod::Dense: return "dense";
    case TrainingMethod::Pruning: return "pruning";
    case TrainingMethod::LowRankCompression: return "lowrank-comp";
    case TrainingMethod::GrowEfficient: return "growefficient";
    case TrainingMethod::SparseBackward: return "backsparse";
    case TrainingMethod::ELRT: return "elrt";
  }
  return "unknown";
}

double training_reduction(TrainingMethod method, double f_dense, double f_reduced,
                          std::optional<double> pretrain_epochs, std::optional<double> finetune_epochs) {
  if (!(f_dense > 0) || !(f_reduced > 0)) throw std::invalid_argument("training_reduction: FLOPs must be positive");
  switch (method) {
    case TrainingMethod::Dense:
      return (3 * f_dense) / (3 * f_dense);
    case TrainingMethod::Pruning:
    case TrainingMethod::LowRankCompression: {
      if (!pretrain_epochs || !finetune_epochs) {
        throw std::invalid_argument(std::string("training_reduction: ") + std::string(to_string(method)) +
                                    " needs both pretraining and fine-tuning epochs");
      }
      if (!(*pretrain_epochs > 0) || !(*finetune_epochs > 0)) {
        throw std::invalid_argument("training_reduction: epoch counts must be positive");
      }
      const double dense = 3 * f_dense * *pretrain_epochs;
      return dense / (dense + 3 * f_reduced * *finetune_epochs);
    }
    case TrainingMethod::GrowEfficient:
      return (3 * f_dense) / (f_reduced + 2 * f_dense);
    case TrainingMethod::SparseBackward:
      return (3 * f_dense) / (4 * f_reduced);
    case TrainingMethod::ELRT:
      return f_dense / f_reduced;
  }
  throw std::invalid_argument("training_reduction: unknown method");
}

}  // namespace elrt
