#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "syndiff/checkpoint.hpp"
#include "syndiff/nets.hpp"

using namespace syndiff;

namespace {

NetConfig tiny_config() {
  NetConfig c;
  c.image_size = 16;
  c.base_channels = 4;
  c.levels = 2;
  c.embed_dim = 8;
  c.hidden_dim = 8;
  return c;
}

template <typename T>
void fill(const BasicTensor<T>& param, T value) {
  auto handle = param;
  for (auto& v : handle.mutable_data()) v = value;
}

template <typename T>
double sq_norm(const BasicTensor<T>& t) {
  double s = 0;
  for (auto v : t.data()) s += static_cast<double>(v) * v;
  return s;
}

// Every parameter of `params` must receive a nonzero gradient from `loss`.
void census(Graph& graph, const Tensor& loss, const ParameterSet<float>& params) {
  auto grads = backward(graph, loss);
  for (const auto& p : params.entries()) {
    INFO(p.name);
    CHECK(grads.reached(p.value));
    CHECK(sq_norm(grads.of(p.value)) > 0.0);
  }
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("syndiff_test_" + name);
}

}  // namespace

TEST_CASE("config validation") {
  NetConfig c;
  CHECK_NOTHROW(c.validate());
  c.image_size = 24;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NetConfig{};
  c.levels = 5;  // 32 / 32 = 1
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NetConfig{};
  c.embed_dim = 7;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(NetConfig{}.channels_at(0) == 32);
  CHECK(NetConfig{}.channels_at(1) == 64);
  CHECK(NetConfig{}.channels_at(2) == 64);
  CHECK(NetConfig{}.channels_at(3) == 128);
  CHECK(NetConfig{}.channels_at(7) == 128);
}

TEST_CASE("sinusoidal encoding") {
  auto e0 = sinusoidal_encoding(0, 32);
  REQUIRE(e0.size() == 32);
  for (int i = 0; i < 32; ++i) CHECK(e0[i] == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(sinusoidal_encoding(3, 4)[0] == doctest::Approx(std::sin(3.0)));
  CHECK(sinusoidal_encoding(3, 4)[3] == doctest::Approx(std::cos(3.0 / 100.0)));

  std::vector<int> grid;
  for (int t = 1; t <= 1000; ++t) grid.push_back(t);
  std::vector<std::vector<double>> encs;
  for (int t : grid) encs.push_back(sinusoidal_encoding(t, 32));
  for (std::size_t a = 0; a < encs.size(); ++a)
    for (std::size_t b = a + 1; b < encs.size(); ++b) {
      double gap = 0;
      for (int i = 0; i < 32; ++i) gap = std::max(gap, std::abs(encs[a][i] - encs[b][i]));
      if (gap <= 1e-3) FAIL("t=", grid[a], " and t=", grid[b], " encode identically");
    }
}

TEST_CASE("temporal embedding length is the hidden width") {
  Rng rng(1);
  ParameterSet<float> ps;
  TimeEmbedding<float> mlp(ps, "time", 32, 48, rng);
  for (int t : {0, 1, 250, 1000}) CHECK(temporal_embedding(t, mlp).size() == 48);
  CHECK(ps.size() == 4);
}

TEST_CASE("generator preserves shape and bounds at 32 and 64") {
  for (int size : {32, 64}) {
    NetConfig c;
    c.image_size = size;
    Rng rng(2);
    GeneratorNet<float> g(c, rng);
    auto x = randn<float>({2, 1, size, size}, rng);
    auto y = randn<float>({2, 1, size, size}, rng);
    NoGradGuard ng;
    auto out = g.forward(x, y, 250);
    CHECK(out.shape() == x.shape());
    float lo = 1, hi = -1;
    for (float v : out.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= -1.0f);
    CHECK(hi <= 1.0f);
    CHECK(hi - lo > 1e-3f);
  }
}

TEST_CASE("generator rejects mismatched inputs") {
  Rng rng(3);
  GeneratorNet<float> g(tiny_config(), rng);
  CHECK_THROWS_AS(g.forward(Tensor({1, 1, 16, 16}), Tensor({1, 1, 8, 8}), 250), DimensionError);
  CHECK_THROWS_AS(g.forward(Tensor({1, 1, 8, 8}), Tensor({1, 1, 8, 8}), 250), DimensionError);
}

TEST_CASE("parameter counts of the default configuration") {
  // Regression values: counted once at build time and pinned.
  Rng rng(4);
  NetConfig c;
  CHECK(GeneratorNet<float>(c, rng).parameters().scalar_count() == 1627009);
  CHECK(DiscriminatorNet<float>(c, DiscriminatorKind::Diffusive, rng).parameters().scalar_count() == 107185);
  CHECK(ResNetGenerator<float>(c, rng).parameters().scalar_count() == 526817);
}

TEST_CASE("same seed builds identical weights") {
  Rng a(5), b(5);
  GeneratorNet<float> ga(tiny_config(), a), gb(tiny_config(), b);
  const auto& ea = ga.parameters().entries();
  const auto& eb = gb.parameters().entries();
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].name == eb[i].name);
    for (std::size_t j = 0; j < ea[i].value.numel(); ++j) CHECK(ea[i].value.at(j) == eb[i].value.at(j));
  }
}

TEST_CASE("forwards are deterministic") {
  Rng rng(6);
  auto c = tiny_config();
  GeneratorNet<float> g(c, rng);
  DiscriminatorNet<float> d(c, DiscriminatorKind::Diffusive, rng);
  ResNetGenerator<float> r(c, rng);
  auto x = randn<float>({2, 1, 16, 16}, rng);
  auto y = randn<float>({2, 1, 16, 16}, rng);
  NoGradGuard ng;
  auto check_same = [](const Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  };
  check_same(g.forward(x, y, 500), g.forward(x, y, 500));
  check_same(d.forward(x, y, 500), d.forward(x, y, 500));
  check_same(r.forward(x), r.forward(x));
}

TEST_CASE("discriminator emits one logit per sample") {
  Rng rng(7);
  NetConfig c;
  DiscriminatorNet<float> d(c, DiscriminatorKind::Diffusive, rng);
  DiscriminatorNet<float> nd(c, DiscriminatorKind::NonDiffusive, rng);
  auto x = randn<float>({4, 1, 32, 32}, rng);
  NoGradGuard ng;
  CHECK(d.forward(x, x, 250).shape() == Shape{4});
  CHECK(nd.forward(x).shape() == Shape{4});
  CHECK_THROWS_AS(nd.forward(x, x, 250), std::logic_error);
  CHECK_THROWS_AS(d.forward(x), std::logic_error);
  CHECK_THROWS_AS(d.forward(x, Tensor({4, 1, 16, 16}), 250), DimensionError);
}

TEST_CASE("zeroed discriminator head gives zero logits") {
  Rng rng(8);
  DiscriminatorNet<float> d(tiny_config(), DiscriminatorKind::Diffusive, rng);
  fill(d.parameters().at("head.weight"), 0.0f);
  fill(d.parameters().at("head.bias"), 0.0f);
  auto x = randn<float>({3, 1, 16, 16}, rng);
  NoGradGuard ng;
  auto logits = d.forward(x, randn<float>({3, 1, 16, 16}, rng), 750);
  for (float v : logits.data()) {
    CHECK(v == 0.0f);
    CHECK(1.0 / (1.0 + std::exp(-v)) == 0.5);
  }
}

TEST_CASE("discriminator logits follow a batch permutation") {
  Rng rng(9);
  auto c = tiny_config();
  DiscriminatorNet<float> d(c, DiscriminatorKind::Diffusive, rng);
  const int n = 4, plane = 16 * 16;
  auto cand = randn<float>({n, 1, 16, 16}, rng);
  auto xt = randn<float>({n, 1, 16, 16}, rng);
  const std::vector<int> perm{2, 0, 3, 1};
  auto permute = [&](const Tensor& src) {
    std::vector<float> v(src.numel());
    for (int i = 0; i < n; ++i)
      std::copy_n(src.data().begin() + perm[i] * plane, plane, v.begin() + i * plane);
    return Tensor(src.shape(), v);
  };
  NoGradGuard ng;
  auto base = d.forward(cand, xt, 500);
  auto shuffled = d.forward(permute(cand), permute(xt), 500);
  for (int i = 0; i < n; ++i) CHECK(shuffled.at(i) == doctest::Approx(base.at(perm[i])).epsilon(1e-6));
}

TEST_CASE("resnet generator preserves shape and bounds") {
  Rng rng(10);
  NetConfig c;
  ResNetGenerator<float> r(c, rng);
  auto x = randn<float>({2, 1, 32, 32}, rng);
  NoGradGuard ng;
  auto out = r.forward(x);
  CHECK(out.shape() == x.shape());
  for (float v : out.data()) CHECK(std::abs(v) <= 1.0f);
  CHECK(r.encode(x).shape() == Shape{2, 64, 8, 8});
}

TEST_CASE("residual block with a zeroed second conv is the identity") {
  Rng rng(11);
  ResNetGenerator<float> r(tiny_config(), rng);
  for (int b = 0; b < ResNetGenerator<float>::kResidualBlocks; ++b) {
    fill(r.parameters().at("res" + std::to_string(b) + ".conv2.weight"), 0.0f);
    fill(r.parameters().at("res" + std::to_string(b) + ".conv2.bias"), 0.0f);
  }
  auto h = randn<float>({2, 8, 4, 4}, rng);
  NoGradGuard ng;
  for (int b = 0; b < ResNetGenerator<float>::kResidualBlocks; ++b) {
    auto out = r.residual(b, h);
    for (std::size_t i = 0; i < h.numel(); ++i) CHECK(out.at(i) == h.at(i));
  }
}

TEST_CASE("every parameter receives a gradient") {
  Rng rng(12);
  auto c = tiny_config();
  auto x = randn<float>({2, 1, 16, 16}, rng);
  auto y = randn<float>({2, 1, 16, 16}, rng);
  auto w = randn<float>({2, 1, 16, 16}, rng);
  {
    GeneratorNet<float> g(c, rng);
    Graph graph;
    GraphScope<float> s(graph);
    census(graph, sum(mul(g.forward(x, y, 500), w)), g.parameters());
  }
  {
    ResNetGenerator<float> r(c, rng);
    Graph graph;
    GraphScope<float> s(graph);
    census(graph, sum(mul(r.forward(x), w)), r.parameters());
  }
  {
    DiscriminatorNet<float> d(c, DiscriminatorKind::Diffusive, rng);
    Graph graph;
    GraphScope<float> s(graph);
    census(graph, sum(mul(d.forward(x, y, 500), Tensor({2}, {0.7f, -1.3f}))), d.parameters());
  }
  {
    DiscriminatorNet<float> d(c, DiscriminatorKind::NonDiffusive, rng);
    Graph graph;
    GraphScope<float> s(graph);
    census(graph, sum(mul(d.forward(x), Tensor({2}, {0.7f, -1.3f}))), d.parameters());
  }
}

TEST_CASE("time conditioning changes the generator output after an update") {
  Rng rng(13);
  auto c = tiny_config();
  GeneratorNet<float> g(c, rng);
  auto x = randn<float>({1, 1, 16, 16}, rng);
  auto y = randn<float>({1, 1, 16, 16}, rng);
  auto target = randn<float>({1, 1, 16, 16}, rng);
  {
    Graph graph;
    GraphScope<float> s(graph);
    auto grads = backward(graph, l1_mean(sub(g.forward(x, y, 250), target)));
    for (const auto& p : g.parameters().entries()) {
      auto handle = p.value;
      auto d = handle.mutable_data();
      auto gp = grads.of(p.value);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= 1e-2f * gp.at(i);
    }
  }
  NoGradGuard ng;
  auto early = g.forward(x, y, 250);
  auto late = g.forward(x, y, 1000);
  double gap = 0;
  for (std::size_t i = 0; i < early.numel(); ++i) gap += std::abs(early.at(i) - late.at(i));
  CHECK(gap > 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(14);
  GeneratorNet<float> g(tiny_config(), rng);
  Checkpoint ckpt;
  ckpt.header = {1, 16, 4, 2, 0xDEADBEEF};
  append_records(ckpt, "gen.", g.parameters());
  const auto path = temp_path("roundtrip.ckpt");
  write_checkpoint(path, ckpt);
  auto loaded = read_checkpoint(path);
  CHECK(loaded.header == ckpt.header);
  REQUIRE(loaded.records.size() == ckpt.records.size());
  for (std::size_t i = 0; i < ckpt.records.size(); ++i) {
    CHECK(loaded.records[i].name == ckpt.records[i].name);
    CHECK(loaded.records[i].value.shape() == ckpt.records[i].value.shape());
    CHECK(std::memcmp(loaded.records[i].value.data().data(), ckpt.records[i].value.data().data(),
                      ckpt.records[i].value.numel() * sizeof(float)) == 0);
  }

  Rng other(15);
  GeneratorNet<float> g2(tiny_config(), other);
  restore_records(loaded, "gen.", g2.parameters());
  auto x = randn<float>({1, 1, 16, 16}, rng);
  NoGradGuard ng;
  auto a = g.forward(x, x, 500), b = g2.forward(x, x, 500);
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0);

  // Re-serializing the loaded file reproduces the same bytes.
  const auto path2 = temp_path("roundtrip2.ckpt");
  write_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(s1.substr(0, 8) == "SYNDIFF1");
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupt checkpoints are reported with a byte offset") {
  Rng rng(16);
  ParameterSet<float> ps;
  Linear<float> lin(ps, "lin", 3, 2, rng);
  Checkpoint ckpt;
  append_records(ckpt, "", ps);
  const auto path = temp_path("corrupt.ckpt");
  write_checkpoint(path, ckpt);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(f)), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  write(bytes.substr(0, bytes.size() - 3));
  try {
    (void)read_checkpoint(path);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    CHECK(std::string(e.what()).find("at byte") != std::string::npos);
  }
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
  write(bytes + "x");
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
  CHECK_THROWS_AS(read_checkpoint(temp_path("does_not_exist.ckpt")), CheckpointError);

  ParameterSet<float> wrong;
  Linear<float> lin2(wrong, "lin", 2, 2, rng);
  write(bytes);
  CHECK_THROWS_AS(restore_records(read_checkpoint(path), "", wrong), CheckpointError);
  std::filesystem::remove(path);
}
