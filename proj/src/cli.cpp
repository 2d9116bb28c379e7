#include "elrt/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "elrt/checkpoint.hpp"
#include "elrt/data.hpp"
#include "elrt/decomposition.hpp"
#include "elrt/flops.hpp"
#include "elrt/model.hpp"
#include "elrt/trainer.hpp"

namespace elrt {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// resnet<depth> or cnn.
ModelSpec parse_arch(const std::string& arch, double width) {
  ModelSpec spec;
  spec.width = width;
  if (arch == "cnn") {
    spec.arch = "cnn";
    spec.depth = 3;
    spec.in_channels = 1;
    spec.in_h = spec.in_w = 28;
  } else if (arch.rfind("resnet", 0) == 0 && arch.size() > 6 &&
             arch.find_first_not_of("0123456789", 6) == std::string::npos) {
    spec.arch = "resnet";
    spec.depth = std::stoul(arch.substr(6));
  } else {
    throw UsageError("unknown --arch '" + arch + "' (expected resnet<depth> or cnn)");
  }
  spec.validate();
  return spec;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_size(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-') throw UsageError(std::string("bad ") + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

Dataset head(const Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  std::vector<std::size_t> idx(limit);
  for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
  return d.subset(idx);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct TrainOptions {
  std::string arch = "resnet20";
  double width = 1.0;
  std::string ranks;
  std::string reg = "dso";
  double lambda_d = 1e-3;
  double rho = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool no_bn_decay = false;
  std::string augment = "auto";
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

void add_train_options(CLI::App* sub, TrainOptions& o) {
  sub->add_option("--arch", o.arch, "resnet<depth> or cnn")->capture_default_str();
  sub->add_option("--width", o.width, "channel width multiplier")->capture_default_str();
  sub->add_option("--ranks", o.ranks, "rank-config file (omit for a dense model)");
  sub->add_option("--reg", o.reg, "none|so|dso|mc|srip")->capture_default_str();
  sub->add_option("--lambda-d", o.lambda_d, "regularization strength")->capture_default_str();
  sub->add_option("--rho", o.rho, "scale inside the regularizer")->capture_default_str();
  sub->add_option("--epochs", o.epochs)->capture_default_str();
  sub->add_option("--data", o.data, "MNIST IDX or CIFAR-10 binary directory")->required();
  sub->add_option("--batch-size", o.batch_size)->capture_default_str();
  sub->add_option("--lr", o.lr, "base learning rate")->capture_default_str();
  sub->add_option("--momentum", o.momentum)->capture_default_str();
  sub->add_option("--weight-decay", o.weight_decay)->capture_default_str();
  sub->add_flag("--no-bn-decay", o.no_bn_decay, "exempt batch-norm affine parameters from weight decay");
  sub->add_option("--augment", o.augment, "auto|on|off (auto: on for 3-channel data)")->capture_default_str();
  sub->add_option("--train-limit", o.train_limit, "use only the first N training samples");
  sub->add_option("--test-limit", o.test_limit, "use only the first N test samples");
}

TrainConfig make_train_config(const TrainOptions& o, const Dataset& train_set) {
  TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.base_lr = o.lr;
  cfg.epochs = o.epochs;
  cfg.lambda_d = o.lambda_d;
  cfg.reg.kind = parse_reg_kind(o.reg);
  cfg.reg.rho = o.rho;
  cfg.seed = o.seed;
  cfg.bn_weight_decay = !o.no_bn_decay;
  if (o.augment == "auto") {
    cfg.augment = train_set.channels() == 3;
  } else if (o.augment == "on" || o.augment == "off") {
    cfg.augment = o.augment == "on";
  } else {
    throw UsageError("--augment must be auto, on or off");
  }
  cfg.validate();
  return cfg;
}

ModelSpec spec_for_data(const TrainOptions& o, const Dataset& d) {
  ModelSpec spec = parse_arch(o.arch, o.width);
  spec.in_channels = d.channels();
  spec.in_h = d.height();
  spec.in_w = d.width();
  spec.classes = d.classes;
  spec.validate();
  return spec;
}

RankConfig ranks_from(const std::string& path) { return path.empty() ? RankConfig{} : load_rank_config(path); }

int cmd_train(const TrainOptions& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("train needs --out");
  auto [train_full, test_full] = load_dataset(o.data);
  const Dataset train_set = head(train_full, o.train_limit);
  const Dataset test_set = head(test_full, o.test_limit);
  const ModelSpec spec = spec_for_data(o, train_set);
  const TrainConfig cfg = make_train_config(o, train_set);
  const RankConfig ranks = ranks_from(o.ranks);

  Model<float> model = build_model<float>(spec, o.seed);
  apply_rank_config(model, ranks, o.seed);
  OptimizerState<float> opt;
  out << "training " << o.arch << " width " << o.width << " on " << train_set.size() << " samples, "
      << model.parameter_count() << " parameters, reg " << to_string(cfg.reg.kind) << "\n";
  const Metrics metrics = train(model, train_set, test_set, cfg, opt, 0, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " reg " << r.reg_loss << " test_acc "
        << r.test_acc << " residual " << r.residual << " excess_residual " << r.excess_residual << std::endl;
  });

  CheckpointMeta meta{spec, serialize_rank_config(ranks), o.seed, cfg.epochs, cfg.digest(), cfg.describe()};
  save_checkpoint(o.out, make_checkpoint(model, opt, meta));
  write_text(o.out + ".metrics.csv", metrics.to_csv());
  write_text(o.out + ".metrics.jsonl", metrics.to_jsonl());
  out << "wrote " << o.out << "\n";
  return 0;
}

struct FlopsOptions {
  std::string arch = "resnet20";
  double width = 1.0;
  std::string ranks;
  std::string method = "elrt";
  std::optional<double> pretrain_epochs;
  std::optional<double> finetune_epochs;
  std::string format = "table";
};

int cmd_flops(const FlopsOptions& o, std::ostream& out) {
  const ModelSpec spec = parse_arch(o.arch, o.width);
  Model<float> model = build_model<float>(spec, 0);
  apply_rank_config(model, ranks_from(o.ranks), 0);
  const auto geometry = model.flops_geometry();
  FlopsReport report = model_reduction(geometry);
  const TrainingMethod method = parse_training_method(o.method);
  report.training_method = std::string(to_string(method));
  report.training_reduction = training_reduction(method, double(report.dense_total), double(report.factorized_total),
                                                 o.pretrain_epochs, o.finetune_epochs);
  if (o.format == "json") {
    out << report.to_json() << "\n";
  } else if (o.format == "table") {
    out << report.to_table();
  } else {
    throw UsageError("--format must be table or json");
  }
  return 0;
}

struct ApproxOptions {
  std::string kernel;
  std::string synthetic;
  std::string budgets;
};

// C_IN,C_OUT,K[,R1,R2[,NOISE[,SEED]]]
Tensor64 synthetic_kernel(const std::string& text) {
  const auto f = split_list(text);
  if (f.size() != 3 && f.size() != 5 && f.size() != 6 && f.size() != 7) {
    throw UsageError("--synthetic expects C_IN,C_OUT,K[,R1,R2[,NOISE[,SEED]]]");
  }
  const std::size_t c_in = parse_size(f[0], "C_IN"), c_out = parse_size(f[1], "C_OUT"), k = parse_size(f[2], "K");
  const std::size_t r1 = f.size() > 3 ? parse_size(f[3], "R1") : c_in;
  const std::size_t r2 = f.size() > 3 ? parse_size(f[4], "R2") : c_out;
  double noise = 0.1;
  if (f.size() > 5) {
    try {
      noise = std::stod(f[5]);
    } catch (const std::exception&) {
      throw UsageError("bad NOISE '" + f[5] + "'");
    }
  }
  const std::uint64_t seed = f.size() > 6 ? parse_size(f[6], "SEED") : 0;
  return planted_tucker_kernel<double>(c_in, c_out, k, r1, r2, noise, seed);
}

Tensor64 checkpoint_kernel(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos) throw UsageError("--kernel expects CKPT:LAYER");
  Restored r = restore_checkpoint(load_checkpoint(spec.substr(0, colon)));
  const std::string layer = spec.substr(colon + 1);
  for (const ConvBN<float>* c : std::as_const(r.model).convs()) {
    if (c->name() != layer) continue;
    if (const auto* t = std::get_if<Tucker2Conv<float>>(&c->conv)) return reconstruct_kernel(*t).cast<double>();
    return std::get<DenseConv<float>>(c->conv).w.cast<double>();
  }
  throw std::runtime_error("checkpoint has no convolution named " + layer);
}

int cmd_approx(const ApproxOptions& o, std::ostream& out) {
  if (o.kernel.empty() == o.synthetic.empty()) throw UsageError("give exactly one of --kernel and --synthetic");
  const Tensor64 w = o.kernel.empty() ? synthetic_kernel(o.synthetic) : checkpoint_kernel(o.kernel);
  std::vector<std::size_t> budgets;
  for (const auto& b : split_list(o.budgets)) budgets.push_back(parse_size(b, "budget"));
  if (budgets.empty()) throw UsageError("--budgets needs at least one value");
  const auto rows = approx_error_study(w, budgets);
  out << study_csv(rows);
  return 0;
}

int cmd_ortho(const std::string& ckpt, std::ostream& out) {
  Restored r = restore_checkpoint(load_checkpoint(ckpt));
  const auto mats = std::as_const(r.model).factor_matrices();
  std::size_t width = 6;
  for (const auto& [name, m] : mats) width = std::max(width, name.size());
  out << std::left << std::setw(int(width)) << "factor" << "  " << std::right << std::setw(5) << "rows" << "  "
      << std::setw(5) << "cols" << "  " << std::setw(12) << "residual" << "  " << std::setw(12) << "excess" << "\n";
  out << std::setprecision(6);
  double sum = 0, sum_excess = 0;
  for (const auto& [name, m] : mats) {
    const double res = orthogonality_residual(*m), ex = excess_orthogonality_residual(*m);
    sum += res;
    sum_excess += ex;
    out << std::left << std::setw(int(width)) << name << "  " << std::right << std::setw(5) << m->dim(0) << "  "
        << std::setw(5) << m->dim(1) << "  " << std::setw(12) << res << "  " << std::setw(12) << ex << "\n";
  }
  if (!mats.empty()) {
    out << "mean residual " << sum / double(mats.size()) << " mean excess " << sum_excess / double(mats.size())
        << " over " << mats.size() << " factors\n";
  } else {
    out << "no factor matrices (dense model)\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, std::size_t test_limit, std::ostream& out) {
  Restored r = restore_checkpoint(load_checkpoint(ckpt));
  const Dataset test_set = head(load_dataset(data).second, test_limit);
  if (test_set.channels() != r.model.spec.in_channels || test_set.height() != r.model.spec.in_h ||
      test_set.width() != r.model.spec.in_w) {
    throw std::runtime_error("dataset geometry does not match the checkpoint's model");
  }
  out << "top1 " << std::setprecision(6) << evaluate(r.model, test_set) << " on " << test_set.size() << " samples\n";
  return 0;
}

struct AblateOptions {
  TrainOptions train;
  std::string regs = "none,dso,so,mc,srip";
  std::string seeds = "1,2,3";
  std::string csv;
};

int cmd_ablate(const AblateOptions& o, std::ostream& out) {
  auto [train_full, test_full] = load_dataset(o.train.data);
  const Dataset train_set = head(train_full, o.train.train_limit);
  const Dataset test_set = head(test_full, o.train.test_limit);
  const ModelSpec spec = spec_for_data(o.train, train_set);
  const TrainConfig cfg = make_train_config(o.train, train_set);
  std::vector<RegKind> kinds;
  for (const auto& k : split_list(o.regs)) kinds.push_back(parse_reg_kind(k));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(o.seeds)) seeds.push_back(parse_size(s, "seed"));
  if (kinds.empty() || seeds.empty()) throw UsageError("--regs and --seeds must be non-empty");
  std::ostringstream csv;
  csv << "reg,seed,final_test_acc,initial_residual,final_residual,initial_excess_residual,final_excess_residual\n";
  const auto runs = run_ablation(spec, ranks_from(o.train.ranks), cfg, kinds, seeds, train_set, test_set,
                                 [&](const AblationRun& r) {
                                   out << to_string(r.kind) << " seed " << r.seed << " acc " << r.final_accuracy()
                                       << " excess residual " << r.metrics.initial_excess_residual << " -> "
                                       << r.final_excess_residual() << std::endl;
                                 });
  for (const auto& r : runs) {
    const double final_res = r.metrics.epochs.empty() ? r.metrics.initial_residual : r.metrics.epochs.back().residual;
    csv << to_string(r.kind) << ',' << r.seed << ',' << r.final_accuracy() << ',' << r.metrics.initial_residual << ','
        << final_res << ',' << r.metrics.initial_excess_residual << ',' << r.final_excess_residual() << '\n';
  }
  if (!o.csv.empty()) write_text(o.csv, csv.str());
  out << csv.str();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank Tucker-2 training toolkit", "elrt"};
  app.require_subcommand(1);

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus metrics");
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option("--seed", train_opts.seed)->capture_default_str();
  train_cmd->add_option("--out", train_opts.out, "checkpoint path; metrics go to <out>.metrics.{csv,jsonl}")
      ->required();

  FlopsOptions flops_opts;
  auto* flops_cmd = app.add_subcommand("flops", "inference and training FLOPs reduction of a rank config");
  flops_cmd->add_option("--arch", flops_opts.arch)->capture_default_str();
  flops_cmd->add_option("--width", flops_opts.width)->capture_default_str();
  flops_cmd->add_option("--ranks", flops_opts.ranks, "rank-config file");
  flops_cmd->add_option("--method", flops_opts.method, "elrt|growefficient|backsparse|pruning|lowrank-comp|dense")
      ->capture_default_str();
  flops_cmd->add_option("--pretrain-epochs", flops_opts.pretrain_epochs);
  flops_cmd->add_option("--finetune-epochs", flops_opts.finetune_epochs);
  flops_cmd->add_option("--format", flops_opts.format, "table|json")->capture_default_str();

  ApproxOptions approx_opts;
  auto* approx_cmd = app.add_subcommand("approx-error", "matrix-SVD versus Tucker-2 error at matched budgets");
  approx_cmd->add_option("--kernel", approx_opts.kernel, "CKPT:LAYER");
  approx_cmd->add_option("--synthetic", approx_opts.synthetic, "C_IN,C_OUT,K[,R1,R2[,NOISE[,SEED]]]");
  approx_cmd->add_option("--budgets", approx_opts.budgets, "comma-separated parameter budgets")->required();

  std::string ortho_ckpt;
  auto* ortho_cmd = app.add_subcommand("ortho-report", "per-factor orthogonality residuals of a checkpoint");
  ortho_cmd->add_option("--ckpt", ortho_ckpt)->required();

  std::string eval_ckpt, eval_data;
  std::size_t eval_limit = 0;
  auto* eval_cmd = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a test set");
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--test-limit", eval_limit);

  AblateOptions ablate_opts;
  auto* ablate_cmd = app.add_subcommand("ablate", "train one model per (regularizer, seed) and summarize");
  add_train_options(ablate_cmd, ablate_opts.train);
  ablate_cmd->add_option("--regs", ablate_opts.regs)->capture_default_str();
  ablate_cmd->add_option("--seeds", ablate_opts.seeds)->capture_default_str();
  ablate_cmd->add_option("--csv", ablate_opts.csv, "also write the summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts, out);
    if (*flops_cmd) return cmd_flops(flops_opts, out);
    if (*approx_cmd) return cmd_approx(approx_opts, out);
    if (*ortho_cmd) return cmd_ortho(ortho_ckpt, out);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_limit, out);
    if (*ablate_cmd) return cmd_ablate(ablate_opts, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace elrt
