#include <cmath>

#include "doctest.h"
#include "elrt/model.hpp"
#include "oracles.hpp"

using namespace elrt;

namespace {

std::string config_path(const std::string& name) { return std::string(ELRT_SOURCE_DIR) + "/configs/" + name; }

FlopsReport report_for(std::size_t depth, const std::string& cfg) {
  Model<float> m = build_resnet_cifar<float>(depth, 1.0, 10, 0);
  apply_rank_config(m, load_rank_config(config_path(cfg)), 0);
  return model_reduction(m.flops_geometry());
}

}  // namespace

TEST_CASE("resnet-20 structure") {
  Model<float> m = build_resnet_cifar<float>(20, 1.0, 10, 1);
  const auto names = m.conv_names();
  REQUIRE(names.size() == 19);
  CHECK(names[0] == "conv1");
  CHECK(names[1] == "layer1.0.conv1");
  CHECK(names[18] == "layer3.2.conv2");
  CHECK(m.fc.w.shape() == Shape{10, 64});
  // 0.27M for the standard network (conv kernels, batch-norm affine, classifier)
  const double params = double(m.parameter_count());
  CHECK(std::abs(params - 0.27e6) / 0.27e6 <= 0.03);
  CHECK(m.blocks[3].stride == 2);
  CHECK(m.blocks[3].c1.geom().h_out() == 16);
  CHECK(m.blocks[6].c1.geom().h_out() == 8);
  CHECK_THROWS(build_resnet_cifar<float>(21, 1.0, 10, 1));
  CHECK_THROWS(build_resnet_cifar<float>(20, 0.0, 10, 1));
  CHECK(build_resnet_cifar<float>(56, 1.0, 10, 1).conv_names().size() == 55);
}

TEST_CASE("narrow resnet forward shape") {
  Model<float> m = build_resnet_cifar<float>(20, 0.25, 10, 2);
  CHECK(m.stem.geom().c_out == 4);
  CHECK(m.blocks[3].out_channels == 8);
  CHECK(m.blocks[6].out_channels == 16);
  const Tensor y = m.predict(oracle::random_tensor<float>(Shape{2, 3, 32, 32}, 3));
  CHECK(y.shape() == Shape{2, 10});
  CHECK_THROWS_AS(m.predict(Tensor(Shape{2, 1, 32, 32})), ShapeError);
}

TEST_CASE("cnn") {
  Model<float> m = build_cnn<float>(0.5, 10, 4);
  CHECK(m.conv_names() == std::vector<std::string>{"conv1", "layer1.0.conv1"});
  CHECK(m.predict(Tensor(Shape{3, 1, 28, 28}, 0.5f)).shape() == Shape{3, 10});
}

TEST_CASE("rank config parsing") {
  const RankConfig a = parse_rank_config("layer1.0.conv1 = 14,14\n");
  REQUIRE(a.entries.size() == 1);
  CHECK(a.entries[0].ranks == std::make_pair<std::size_t, std::size_t>(14, 14));
  const RankConfig b = parse_rank_config("layer1.0.conv1 = N/A");
  CHECK_FALSE(b.entries[0].ranks.has_value());
  const RankConfig c = parse_rank_config("# comment\n\n   \nlayer2.1.conv2=  3 , 5   # trailing\n");
  REQUIRE(c.entries.size() == 1);
  CHECK(c.find("layer2.1.conv2")->ranks == std::make_pair<std::size_t, std::size_t>(3, 5));
  CHECK(c.find("layer9.9.conv9") == nullptr);

  try {
    parse_rank_config("a = 1,1\n\nb = 1;1\n");
    FAIL("expected an error");
  } catch (const RankConfigError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse_rank_config("a = 1,1\na = 2,2\n");
    FAIL("expected an error");
  } catch (const RankConfigError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_rank_config("a = 0,1"), RankConfigError);
  CHECK_THROWS_AS(parse_rank_config("a = x,1"), RankConfigError);
  CHECK_THROWS_AS(parse_rank_config("a 1,1"), RankConfigError);
  CHECK_THROWS_AS(parse_rank_config(" = 1,1"), RankConfigError);
}

TEST_CASE("rank config parse and serialize round trip") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    RankConfig cfg;
    const int n = int(rng() % 20);
    for (int k = 0; k < n; ++k) {
      RankEntry e{"layer" + std::to_string(rng() % 4) + "." + std::to_string(k) + ".conv" + std::to_string(rng() % 3),
                  std::nullopt};
      if (rng() % 3) e.ranks = std::make_pair(1 + rng() % 64, 1 + rng() % 64);
      cfg.entries.push_back(e);
    }
    const RankConfig back = parse_rank_config(serialize_rank_config(cfg));
    CHECK(back == cfg);
    CHECK(serialize_rank_config(back) == serialize_rank_config(cfg));
  }
}

TEST_CASE("applying rank configs") {
  Model<float> base = build_resnet_cifar<float>(20, 0.5, 10, 7);
  Model<float> same = build_resnet_cifar<float>(20, 0.5, 10, 7);
  apply_rank_config(same, RankConfig{}, 1);
  CHECK(same.parameter_count() == base.parameter_count());
  CHECK(std::get<DenseConv<float>>(same.blocks[0].c1.conv).w == std::get<DenseConv<float>>(base.blocks[0].c1.conv).w);

  const RankConfig cfg = parse_rank_config("layer1.0.conv1 = 4,4\nlayer3.2.conv2 = 16,8\nconv1 = 2,3\n");
  Model<float> a = build_resnet_cifar<float>(20, 0.5, 10, 7);
  Model<float> b = build_resnet_cifar<float>(20, 0.5, 10, 7);
  apply_rank_config(a, cfg, 11);
  apply_rank_config(b, cfg, 11);
  CHECK(a.blocks[0].c1.factorized());
  CHECK(a.blocks[8].c2.factorized());
  CHECK(a.stem.factorized());
  CHECK_FALSE(a.blocks[0].c2.factorized());
  CHECK(a.factor_matrices().size() == 6);
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(*pa[i].tensor == *pb[i].tensor);
  }

  const Tensor x = oracle::random_tensor<float>(Shape{2, 3, 32, 32}, 12);
  CHECK(a.predict(x).shape() == base.predict(x).shape());

  Model<float> c = build_resnet_cifar<float>(20, 0.5, 10, 7);
  CHECK_THROWS_WITH_AS(apply_rank_config(c, parse_rank_config("layer4.0.conv1 = 2,2"), 0),
                       doctest::Contains("layer4.0.conv1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(apply_rank_config(c, parse_rank_config("layer1.0.conv1 = 2,9"), 0),
                       doctest::Contains("layer1.0.conv1"), std::invalid_argument);
  CHECK_FALSE(c.blocks[0].c1.factorized());

  apply_rank_config(a, parse_rank_config("layer1.0.conv1 = N/A"), 3);
  CHECK_FALSE(a.blocks[0].c1.factorized());
}

TEST_CASE("shipped rank tables reproduce the reported reductions") {
  CHECK(std::abs(report_for(20, "resnet20_flops1.98x.txt").inference_reduction / 1.98 - 1.0) <= 0.05);
  CHECK(std::abs(report_for(20, "resnet20_flops3.02x.txt").inference_reduction / 3.02 - 1.0) <= 0.05);
  CHECK(std::abs(report_for(20, "resnet20_params6.01x.txt").param_reduction / 6.01 - 1.0) <= 0.05);
  CHECK(std::abs(report_for(56, "resnet56_flops2.05x.txt").inference_reduction / 2.05 - 1.0) <= 0.05);
  CHECK(std::abs(report_for(56, "resnet56_flops2.52x.txt").inference_reduction / 2.52 - 1.0) <= 0.05);
}
