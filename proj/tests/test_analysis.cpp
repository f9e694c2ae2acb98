#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "digitnet/analysis.hpp"
#include "support/testutil.hpp"

using namespace digitnet;
namespace tu = digitnet::testutil;

namespace {

// filters as columns of a [1,1,C,F] weight tensor
Tensor filters_from_columns(const std::vector<std::vector<double>>& cols) {
  const std::size_t F = cols.size();
  const std::size_t C = cols[0].size();
  Tensor w({1, 1, C, F});
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) w[c * F + f] = cols[f][c];
  }
  return w;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cosine similarity identities") {
  const Tensor a({3}, {0.3, -0.7, 1.1});
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})) == 0.0);
  CHECK(cosine_similarity(Tensor({3}, {1, 2, 2}), Tensor({3}, {2, 1, 2})) ==
        doctest::Approx(8.0 / 9.0));
  CHECK_THROWS_AS(cosine_similarity(Tensor({2}), Tensor({2}, {1, 1})), DomainError);
  CHECK_THROWS_AS(cosine_similarity(Tensor({2}, {1, 1}), Tensor({3}, {1, 1, 1})), ShapeError);
}

TEST_CASE("cosine similarity is scale invariant for positive factors") {
  SeededRng rng(41);
  for (int iter = 0; iter < 30; ++iter) {
    Tensor a({6}), b({6});
    for (std::size_t i = 0; i < 6; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    const double c = 0.01 + 10.0 * rng.uniform();
    CHECK(std::fabs(cosine_similarity(scale(a, c), b) - cosine_similarity(a, b)) < 1e-12);
  }
}

TEST_CASE("similarity matrix of identical filters is all ones") {
  const Tensor w = filters_from_columns({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  const SimilarityMatrix m = similarity_matrix(w);
  REQUIRE(m.n == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(m.at(i, j) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(m.skipped == 0);
}

TEST_CASE("similarity matrix of basis filters is the identity") {
  const Tensor w =
      filters_from_columns({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const SimilarityMatrix m = similarity_matrix(w);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.at(i, j) == (i == j ? 1.0 : 0.0));
  }
}

TEST_CASE("similarity matrix matches the two-loop oracle exactly") {
  SeededRng rng(42);
  for (std::size_t F : {2ul, 8ul, 32ul}) {
    Tensor w({3, 3, 2, F});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal();
    const SimilarityMatrix m = similarity_matrix(w);
    REQUIRE(m.n == F);
    // brute force: extract each filter, call cosine_similarity pairwise
    for (std::size_t i = 0; i < F; ++i) {
      Tensor fi({18});
      for (std::size_t t = 0; t < 18; ++t) fi[t] = w[t * F + i];
      for (std::size_t j = 0; j < F; ++j) {
        if (i == j) {
          REQUIRE(m.at(i, j) == 1.0);
          continue;
        }
        Tensor fj({18});
        for (std::size_t t = 0; t < 18; ++t) fj[t] = w[t * F + j];
        REQUIRE(m.at(i, j) == cosine_similarity(fi, fj));
      }
    }
    // symmetry and range
    for (std::size_t i = 0; i < F; ++i) {
      for (std::size_t j = 0; j < F; ++j) {
        REQUIRE(m.at(i, j) == m.at(j, i));
        REQUIRE(m.at(i, j) >= -1.0 - 1e-12);
        REQUIRE(m.at(i, j) <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("zero-norm filters are skipped with a warning count") {
  const Tensor w = filters_from_columns({{1, 0}, {0, 0}, {0, 1}});
  const SimilarityMatrix m = similarity_matrix(w);
  CHECK(m.skipped == 2);  // pairs (0,1) and (1,2)
  CHECK(m.at(0, 2) == 0.0);
  CHECK(m.at(1, 1) == 1.0);
  const SimilarPairReport r = similar_pairs(m, 0.5);
  CHECK(r.skipped == 2);
  CHECK(r.pairs.empty());
}

TEST_CASE("similar pairs: identical, orthogonal and the hand-built triple") {
  const Tensor identical = filters_from_columns({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  const SimilarPairReport all = similar_pairs(similarity_matrix(identical), 0.5);
  CHECK(all.pairs.size() == 6);
  CHECK(all.total_pairs == 6);
  CHECK(all.ratio == 1.0);

  const Tensor ortho = filters_from_columns({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const SimilarPairReport none = similar_pairs(similarity_matrix(ortho), 0.5);
  CHECK(none.pairs.empty());
  CHECK(none.ratio == 0.0);

  const double s = std::sqrt(0.5);
  const Tensor triple = filters_from_columns({{1, 0}, {s, s}, {0, 1}});
  const SimilarPairReport two = similar_pairs(similarity_matrix(triple), 0.6);
  REQUIRE(two.pairs.size() == 2);
  CHECK(two.ratio == doctest::Approx(2.0 / 3.0));
  for (const SimilarPair& p : two.pairs) {
    CHECK(p.similarity == doctest::Approx(s).epsilon(1e-12));
    CHECK(((p.i == 0 && p.j == 1) || (p.i == 1 && p.j == 2)));
  }
}

TEST_CASE("pair counts are monotone non-increasing in the threshold") {
  SeededRng rng(43);
  Tensor w({3, 3, 1, 16});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal();
  const SimilarityMatrix m = similarity_matrix(w);
  std::size_t prev = SIZE_MAX;
  for (double t : {0.1, 0.3, 0.5, 0.6, 0.8, 0.95}) {
    const std::size_t count = similar_pairs(m, t).pairs.size();
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("pairs are sorted by descending similarity") {
  SeededRng rng(44);
  Tensor w({2, 2, 1, 12});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal();
  const SimilarPairReport r = similar_pairs(similarity_matrix(w), -0.99);
  REQUIRE(r.pairs.size() == r.total_pairs);
  for (std::size_t i = 1; i < r.pairs.size(); ++i) {
    CHECK(r.pairs[i - 1].similarity >= r.pairs[i].similarity);
  }

  const SimilarPairReport cut = similar_pairs(similarity_matrix(w), 0.3);
  for (const SimilarPair& p : cut.pairs) CHECK(p.similarity >= 0.3);
}

TEST_CASE("abs-similarity counts anti-correlated filters") {
  const Tensor w = filters_from_columns({{1, 0}, {-1, 0}});
  const SimilarityMatrix m = similarity_matrix(w);
  CHECK(similar_pairs(m, 0.5, /*abs=*/false).pairs.empty());
  const SimilarPairReport abs_report = similar_pairs(m, 0.5, /*abs=*/true);
  REQUIRE(abs_report.pairs.size() == 1);
  CHECK(abs_report.pairs[0].similarity == doctest::Approx(-1.0));
}

TEST_CASE("threshold outside (-1,1] is a config error") {
  const Tensor w = filters_from_columns({{1, 0}, {0, 1}});
  const SimilarityMatrix m = similarity_matrix(w);
  CHECK_THROWS_AS(similar_pairs(m, -1.0), ConfigError);
  CHECK_THROWS_AS(similar_pairs(m, 1.5), ConfigError);
  CHECK_NOTHROW(similar_pairs(m, 1.0));
}

TEST_CASE("analyze_network emits layers x thresholds rows deterministically") {
  SeededRng rng(45);
  Network net = Network::build(default_architecture(6, 4), rng);
  const AnalysisReport report = analyze_network(net, {0.5, 0.6});
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].layer_index == 1);
  CHECK(report.rows[0].kernel == 3);
  CHECK(report.rows[0].n == 6);
  CHECK(report.rows[2].layer_index == 2);
  CHECK(report.rows[2].kernel == 5);
  CHECK(report.rows[2].n == 4);
  for (const auto& row : report.rows) {
    CHECK(row.ratio >= 0.0);
    CHECK(row.ratio <= 1.0);
  }

  const std::string dir = tu::make_temp_dir("report");
  write_report_csv(report, dir + "/a.csv");
  write_report_csv(analyze_network(net, {0.5, 0.6}), dir + "/b.csv");
  CHECK(slurp(dir + "/a.csv") == slurp(dir + "/b.csv"));

  const std::string csv = slurp(dir + "/a.csv");
  CHECK(csv.rfind("layer,kernel,filters,threshold,pair_count,total_pairs,ratio\n", 0) == 0);

  write_report_details(report, dir);
  CHECK(std::filesystem::exists(dir + "/similarity_layer1_t0.5.csv"));
  CHECK(std::filesystem::exists(dir + "/similarity_layer2_t0.6.csv"));
}

TEST_CASE("sweep trains per filter count and reports every combination") {
  const Dataset ds = tu::make_synth_dataset(96, 46);
  SweepConfig cfg;
  cfg.filter_counts = {2, 3};
  cfg.thresholds = {0.5, 0.6};
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.limit_train = 96;
  const AnalysisReport report = sweep(cfg, ds);
  REQUIRE(report.rows.size() == 8);  // 2 counts x 2 layers x 2 thresholds
  for (const auto& row : report.rows) {
    CHECK((row.n == 2 || row.n == 3));
    CHECK(row.ratio >= 0.0);
    CHECK(row.ratio <= 1.0);
    CHECK(row.total_pairs == row.n * (row.n - 1) / 2);
  }
  // detail filenames disambiguate by filter count in sweep mode
  const std::string dir = tu::make_temp_dir("sweep");
  write_report_details(report, dir);
  CHECK(std::filesystem::exists(dir + "/similarity_layer1_f2_t0.5.csv"));
  CHECK(std::filesystem::exists(dir + "/similarity_layer2_f3_t0.6.csv"));
}

TEST_CASE("activation maps: shapes, zero case and the direct-conv oracle") {
  SeededRng rng(47);
  Network net = Network::build(default_architecture(5, 3), rng);

  Tensor zero_image({28, 28, 1});
  // zero biases by construction, so a zero image gives zero maps
  const auto zero_maps = activation_maps(net, zero_image, 1);
  REQUIRE(zero_maps.size() == 5);
  for (const Tensor& m : zero_maps) {
    REQUIRE(m.shape() == std::vector<std::size_t>{26, 26});
    for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(m[i] == 0.0);
  }

  Tensor image({28, 28, 1});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
  const auto maps = activation_maps(net, image, 1);
  const Tensor& w = net.params()[0].weights;
  const Tensor& b = net.params()[0].bias;
  for (std::size_t f = 0; f < 5; ++f) {
    for (std::size_t y = 0; y < 26; ++y) {
      for (std::size_t x = 0; x < 26; ++x) {
        double acc = b[f];
        for (std::size_t dy = 0; dy < 3; ++dy) {
          for (std::size_t dx = 0; dx < 3; ++dx) {
            acc += image[(y + dy) * 28 + (x + dx)] * w[((dy * 3 + dx) * 1 + 0) * 5 + f];
          }
        }
        const double expected = acc > 0.0 ? acc : 0.0;  // post-ReLU
        REQUIRE(std::fabs(maps[f][y * 26 + x] - expected) < 1e-9);
      }
    }
  }

  CHECK_THROWS_AS(activation_maps(net, image, 0), DomainError);
  CHECK_THROWS_AS(activation_maps(net, image, 3), DomainError);

  const auto maps2 = activation_maps(net, image, 2);
  REQUIRE(maps2.size() == 3);
  CHECK(maps2[0].shape() == std::vector<std::size_t>{22, 22});
}

TEST_CASE("export_gray_image min-max scaling and round-trip") {
  const std::string dir = tu::make_temp_dir("gray");
  export_gray_image(Tensor({2, 2}, {0, 1, 2, 3}), dir + "/ramp.pgm");
  const GrayImage ramp = read_pgm(dir + "/ramp.pgm");
  REQUIRE(ramp.width == 2);
  REQUIRE(ramp.height == 2);
  CHECK(ramp.pixels == std::vector<std::uint8_t>{0, 85, 170, 255});

  export_gray_image(Tensor({2, 2}, {4, 4, 4, 4}), dir + "/flat.pgm");
  const GrayImage flat = read_pgm(dir + "/flat.pgm");
  CHECK(flat.pixels == std::vector<std::uint8_t>(4, 128));

  // re-writing the parsed image reproduces identical bytes
  write_pgm(ramp, dir + "/ramp2.pgm");
  CHECK(tu::read_bytes(dir + "/ramp.pgm") == tu::read_bytes(dir + "/ramp2.pgm"));
}

TEST_CASE("filter and pair renderings have the expected geometry") {
  SeededRng rng(48);
  Network net = Network::build(default_architecture(4, 3), rng);
  const GrayImage filters = render_filters(net.params()[0].weights);
  // 4 filters -> 2x2 grid of 24x24 tiles plus separators
  CHECK(filters.width == 2 * 24 + 1);
  CHECK(filters.height == 2 * 24 + 1);

  Tensor image({28, 28, 1});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
  GrayImage pair;
  SimilarPair top{};
  const bool found = render_similar_pair(net, image, 1, -0.99, false, pair, &top);
  REQUIRE(found);
  CHECK(top.i < top.j);
  CHECK(pair.width > 0);
  CHECK(pair.height > 0);

  GrayImage none;
  CHECK_FALSE(render_similar_pair(net, image, 1, 1.0, false, none));
}
