#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "discap/errors.hpp"
#include "discap/io.hpp"
#include "discap/rng.hpp"

using namespace discap;

namespace {

// Unique temp path per test run; cleaned up by the fixture struct.
struct TempDir {
  std::filesystem::path dir;
  TempDir() {
    dir = std::filesystem::temp_directory_path() /
          ("discap_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("captions JSON round trip and validation") {
  TempDir tmp;
  CaptionDataset dataset;
  dataset.add("img1", {"A man riding!", "a man rides"});
  dataset.add("img2", {"one caption"});
  write_captions(dataset, tmp.path("caps.json"));
  CaptionDataset back = read_captions(tmp.path("caps.json"));
  REQUIRE(back.size() == 2);
  CHECK(back.at("img1").captions == dataset.at("img1").captions);
  CHECK(back.at("img1").tokenized == dataset.at("img1").tokenized);
  CHECK(back.at("img2").captions == dataset.at("img2").captions);

  // duplicate id named in the error
  std::ofstream dup(tmp.path("dup.json"));
  dup << R"({"images":[{"id":"x","captions":["a"]},{"id":"x","captions":["b"]}]})";
  dup.close();
  CHECK_THROWS_WITH_AS(read_captions(tmp.path("dup.json")), doctest::Contains("x"),
                       ValidationError);

  // empty caption list
  std::ofstream empty(tmp.path("empty.json"));
  empty << R"({"images":[{"id":"y","captions":[]}]})";
  empty.close();
  CHECK_THROWS_WITH_AS(read_captions(tmp.path("empty.json")), doctest::Contains("y"),
                       ValidationError);

  // malformed JSON and trailing data are I/O errors
  std::ofstream bad(tmp.path("bad.json"));
  bad << R"({"images": [)";
  bad.close();
  CHECK_THROWS_AS(read_captions(tmp.path("bad.json")), IoError);
  std::ofstream trailing(tmp.path("trailing.json"));
  trailing << R"({"images":[]} extra)";
  trailing.close();
  CHECK_THROWS_AS(read_captions(tmp.path("trailing.json")), IoError);
  CHECK_THROWS_AS(read_captions(tmp.path("missing.json")), IoError);
}

TEST_CASE("candidates require exactly one caption per image") {
  TempDir tmp;
  std::ofstream two(tmp.path("two.json"));
  two << R"({"images":[{"id":"x","captions":["a","b"]}]})";
  two.close();
  CHECK_THROWS_AS(read_candidates(tmp.path("two.json")), ValidationError);
}

TEST_CASE("DDEM layout arithmetic: header-only and single-record files") {
  TempDir tmp;
  EmbeddingStore empty;
  write_embeddings(empty, tmp.path("empty.ddem"));
  CHECK(std::filesystem::file_size(tmp.path("empty.ddem")) == 16);
  EmbeddingStore back = read_embeddings(tmp.path("empty.ddem"));
  CHECK(back.size() == 0);

  EmbeddingStore one;
  one.add("a", {1.0f, 0.0f});
  write_embeddings(one, tmp.path("one.ddem"));
  CHECK(std::filesystem::file_size(tmp.path("one.ddem")) == 27);  // 16 + 2 + 1 + 8
  EmbeddingStore round = read_embeddings(tmp.path("one.ddem"));
  CHECK(round.vec("a") == std::vector<float>{1.0f, 0.0f});
}

TEST_CASE("DDEM round trip is bitwise over random stores") {
  TempDir tmp;
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingStore store;
    int dim = 1 + static_cast<int>(rng.below(8));
    size_t count = rng.below(12);
    for (size_t i = 0; i < count; ++i) {
      std::vector<float> v(static_cast<size_t>(dim));
      bool nonzero = false;
      for (float& x : v) {
        x = static_cast<float>(rng.uniform(-2.0, 2.0));
        nonzero = nonzero || x != 0.0f;
      }
      if (!nonzero) v[0] = 1.0f;
      store.add("id" + std::to_string(i), v);
    }
    std::string path = tmp.path("roundtrip.ddem");
    write_embeddings(store, path);
    EmbeddingStore back = read_embeddings(path);
    REQUIRE(back.size() == store.size());
    CHECK(back.dim() == store.dim());
    for (const auto& [id, vec] : store.entries()) {
      CHECK(back.vec(id) == vec);  // exact float equality
    }
  }
}

TEST_CASE("DDEM error paths carry byte offsets") {
  TempDir tmp;
  std::ofstream bad(tmp.path("bad.ddem"), std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_WITH_AS(read_embeddings(tmp.path("bad.ddem")), doctest::Contains("magic"), IoError);

  // valid magic, truncated header
  std::ofstream trunc(tmp.path("trunc.ddem"), std::ios::binary);
  trunc << "DDEM";
  trunc.put(1);
  trunc.close();
  CHECK_THROWS_WITH_AS(read_embeddings(tmp.path("trunc.ddem")), doctest::Contains("offset"),
                       IoError);

  // bad version
  EmbeddingStore store;
  store.add("a", {1.0f});
  write_embeddings(store, tmp.path("v2.ddem"));
  {
    std::fstream patch(tmp.path("v2.ddem"), std::ios::in | std::ios::out | std::ios::binary);
    patch.seekp(4);
    patch.put(9);
  }
  CHECK_THROWS_WITH_AS(read_embeddings(tmp.path("v2.ddem")), doctest::Contains("version"), IoError);

  // trailing garbage
  write_embeddings(store, tmp.path("extra.ddem"));
  {
    std::ofstream append(tmp.path("extra.ddem"), std::ios::binary | std::ios::app);
    append.put(0);
  }
  CHECK_THROWS_WITH_AS(read_embeddings(tmp.path("extra.ddem")), doctest::Contains("trailing"),
                       IoError);
}

TEST_CASE("DDEM caption stores derive owners from ids") {
  TempDir tmp;
  EmbeddingStore store(StoreKind::kCaption);
  store.add("imgA#0", {1.0f, 0.0f}, "imgA");
  store.add("imgA#1", {0.0f, 1.0f}, "imgA");
  store.add("imgB#0", {1.0f, 1.0f}, "imgB");
  write_embeddings(store, tmp.path("caps.ddem"));
  EmbeddingStore back = read_embeddings(tmp.path("caps.ddem"), StoreKind::kCaption);
  CHECK(back.owner("imgA#0") == "imgA");
  CHECK(back.owner("imgB#0") == "imgB");
  CHECK(back.by_owner().at("imgA").size() == 2);

  EmbeddingStore plain;
  plain.add("no-separator", {1.0f});
  write_embeddings(plain, tmp.path("plain.ddem"));
  CHECK_THROWS_AS(read_embeddings(tmp.path("plain.ddem"), StoreKind::kCaption), ValidationError);
}

TEST_CASE("DDRF layout and bitwise round trip") {
  TempDir tmp;
  RegionFeatureSet empty;
  empty.dim = 3;
  write_region_features(empty, tmp.path("empty.ddrf"));
  CHECK(std::filesystem::file_size(tmp.path("empty.ddrf")) == 16);
  CHECK(read_region_features(tmp.path("empty.ddrf")).features.empty());

  RegionFeatureSet one;
  one.dim = 3;
  Mat m(2, 3);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<float>(i) * 0.25f;
  one.features["img"] = m;
  write_region_features(one, tmp.path("one.ddrf"));
  // 16 header + 2 + 3 (id) + 4 (N) + 24 (2x3 f32)
  CHECK(std::filesystem::file_size(tmp.path("one.ddrf")) == 16 + 2 + 3 + 4 + 24);

  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    RegionFeatureSet set;
    set.dim = 1 + static_cast<int>(rng.below(6));
    size_t count = rng.below(6);
    for (size_t i = 0; i < count; ++i) {
      Mat features(1 + static_cast<int>(rng.below(5)), set.dim);
      for (double& x : features.data) {
        x = static_cast<double>(static_cast<float>(rng.uniform(-3.0, 3.0)));
      }
      set.features["img" + std::to_string(i)] = std::move(features);
    }
    std::string path = tmp.path("roundtrip.ddrf");
    write_region_features(set, path);
    RegionFeatureSet back = read_region_features(path);
    REQUIRE(back.features.size() == set.features.size());
    CHECK(back.dim == set.dim);
    for (const auto& [id, mat] : set.features) {
      CHECK(back.features.at(id).rows == mat.rows);
      CHECK(back.features.at(id).data == mat.data);  // exact: values are f32-representable
    }
  }
}

TEST_CASE("checkpoint matrices round trip bitwise") {
  TempDir tmp;
  Rng rng(41);
  std::map<std::string, Mat> matrices;
  for (int i = 0; i < 5; ++i) {
    Mat m(1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)));
    for (double& x : m.data) x = rng.uniform(-1.0, 1.0);
    matrices["m" + std::to_string(i)] = std::move(m);
  }
  write_matrices(matrices, tmp.path("ckpt.ddcp"));
  std::map<std::string, Mat> back = read_matrices(tmp.path("ckpt.ddcp"));
  REQUIRE(back.size() == matrices.size());
  for (const auto& [name, mat] : matrices) {
    CHECK(back.at(name).rows == mat.rows);
    CHECK(back.at(name).cols == mat.cols);
    CHECK(back.at(name).data == mat.data);  // exact doubles
  }
}

TEST_CASE("train state serializes through the checkpoint container") {
  ToyConfig config;
  config.n_groups = 1;
  config.k_similar = 2;
  config.vocab = 10;
  config.d_m = 8;
  config.ffn = 12;
  config.steps = 3;
  config.seed = 9;
  TrainResult result = train_toy(config);
  TempDir tmp;
  write_matrices(state_to_matrices(result.state), tmp.path("state.ddcp"));
  TrainState back = state_from_matrices(read_matrices(tmp.path("state.ddcp")));
  CHECK(back.omega == result.state.omega);
  CHECK(back.bias == result.state.bias);
  CHECK(back.step == result.state.step);
  CHECK(back.encoder.width == result.state.encoder.width);
  CHECK(back.encoder.layers.size() == result.state.encoder.layers.size());
  CHECK(back.encoder.layers[0].w_q.data == result.state.encoder.layers[0].w_q.data);
  CHECK(back.decoder.embed.data == result.state.decoder.embed.data);
  CHECK(back.classifier.w.data == result.state.classifier.w.data);
}

TEST_CASE("groups and profiles round trip") {
  TempDir tmp;
  GroupsFile file;
  file.k = 2;
  file.mode = "image-image";
  file.seed = 99;
  file.groups.push_back({"t1", {"a", "b"}, false});
  file.groups.push_back({"t2", {"c", "d"}, true});
  write_groups(file, tmp.path("groups.json"));
  GroupsFile back = read_groups(tmp.path("groups.json"));
  CHECK(back.k == 2);
  CHECK(back.seed == 99);
  REQUIRE(back.groups.size() == 2);
  CHECK(back.groups[0].target == "t1");
  CHECK(back.groups[0].similars == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(back.groups[0].leftover);
  CHECK(back.groups[1].leftover);

  std::vector<DistinctProfile> profiles;
  DistinctProfile p;
  p.target = "t1";
  p.omega = {"kite", "red"};
  p.weights = {{"kite", 0.5}, {"red", 1.0}};
  profiles.push_back(p);
  write_profiles(profiles, tmp.path("profiles.json"));
  std::vector<DistinctProfile> back_profiles = read_profiles(tmp.path("profiles.json"));
  REQUIRE(back_profiles.size() == 1);
  CHECK(back_profiles[0].target == "t1");
  CHECK(back_profiles[0].omega == p.omega);
  CHECK(back_profiles[0].weights.at("kite") == 0.5);
  CHECK(back_profiles[0].weights.at("red") == 1.0);
}

TEST_CASE("toy config parses flat JSON and rejects unknown keys") {
  TempDir tmp;
  std::ofstream cfg(tmp.path("cfg.json"));
  cfg << R"({"K": 3, "seed": 7, "steps": 50, "learning_rate": 0.25, "d_m": 8,
             "vocab": 16, "tau": "inf", "indicator": "threshold"})";
  cfg.close();
  ToyConfig config = read_toy_config(tmp.path("cfg.json"));
  CHECK(config.k_similar == 3);
  CHECK(config.seed == 7);
  CHECK(config.steps == 50);
  CHECK(config.learning_rate == 0.25);
  CHECK(config.d_m == 8);
  CHECK(config.vocab == 16);
  CHECK(std::isinf(config.tau));

  std::ofstream bad(tmp.path("bad.json"));
  bad << R"({"learning_rat": 0.1})";
  bad.close();
  CHECK_THROWS_WITH_AS(read_toy_config(tmp.path("bad.json")), doctest::Contains("learning_rat"),
                       ValidationError);
}
