#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "discap/distinct.hpp"
#include "discap/errors.hpp"
#include "discap/rng.hpp"

using namespace discap;

namespace {

TokenSeq words(std::initializer_list<const char*> list) {
  TokenSeq out;
  for (const char* w : list) out.emplace_back(w);
  return out;
}

}  // namespace

TEST_CASE("distinct_words is plain set subtraction") {
  std::vector<TokenSeq> target{words({"a", "red", "dog"}), words({"a", "dog", "frisbee"})};
  std::vector<TokenSeq> similar{words({"a", "dog", "man"})};
  CHECK(distinct_words(target, similar) == WordSet{"red", "frisbee"});
  CHECK(distinct_words(target, target) == WordSet{});
  CHECK(distinct_words(target, {words({"other", "things"})}) ==
        WordSet{"a", "red", "dog", "frisbee"});
  CHECK_THROWS_AS(distinct_words({}, similar), ValidationError);
}

TEST_CASE("distinct_words properties: subset and antitone") {
  Rng rng(19);
  auto random_caption = [&rng]() {
    TokenSeq seq;
    for (size_t i = 0; i < 1 + rng.below(6); ++i) {
      seq.push_back(std::string(1, static_cast<char>('a' + rng.below(8))));
    }
    return seq;
  };
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenSeq> target{random_caption(), random_caption()};
    std::vector<TokenSeq> similar{random_caption()};
    WordSet omega = distinct_words(target, similar);
    WordSet target_words = word_set(target);
    WordSet similar_words = word_set(similar);
    for (const std::string& w : omega) {
      CHECK(target_words.count(w));
      CHECK_FALSE(similar_words.count(w));
    }
    // adding a similar caption can only shrink omega
    std::vector<TokenSeq> more = similar;
    more.push_back(random_caption());
    WordSet smaller = distinct_words(target, more);
    CHECK(std::includes(omega.begin(), omega.end(), smaller.begin(), smaller.end()));
  }
}

TEST_CASE("relatedness_weights normalizes by the max") {
  EmbeddingStore sentences;
  sentences.add(relatedness_sentence("red"), {1.0f, 0.0f});      // dot 2.0
  sentences.add(relatedness_sentence("frisbee"), {0.5f, 0.0f});  // dot 1.0
  std::vector<float> image{2.0f, 0.0f};

  std::map<std::string, double> weights =
      relatedness_weights(WordSet{"red", "frisbee"}, sentences, image);
  CHECK(weights.at("red") == doctest::Approx(1.0));
  CHECK(weights.at("frisbee") == doctest::Approx(0.5));

  // singleton omega self-normalizes to 1
  std::map<std::string, double> single = relatedness_weights(WordSet{"red"}, sentences, image);
  CHECK(single.at("red") == 1.0);
}

TEST_CASE("relatedness_weights clamps negatives and falls back to uniform") {
  EmbeddingStore sentences;
  sentences.add(relatedness_sentence("up"), {1.0f, 0.0f});
  sentences.add(relatedness_sentence("down"), {-1.0f, 0.0f});
  std::vector<float> image{1.0f, 0.0f};
  std::map<std::string, double> weights =
      relatedness_weights(WordSet{"up", "down"}, sentences, image);
  CHECK(weights.at("up") == doctest::Approx(1.0));
  CHECK(weights.at("down") == doctest::Approx(0.0));  // clamped, not sign-flipped

  // every dot nonpositive: uniform fallback
  std::vector<float> orthogonal{0.0f, 1.0f};
  std::map<std::string, double> uniform =
      relatedness_weights(WordSet{"up", "down"}, sentences, orthogonal);
  CHECK(uniform.at("up") == 1.0);
  CHECK(uniform.at("down") == 1.0);

  CHECK_THROWS_WITH_AS(relatedness_weights(WordSet{"missing"}, sentences, image),
                       doctest::Contains("missing"), ValidationError);
}

TEST_CASE("relatedness_weights invariant under positive image scaling") {
  Rng rng(23);
  EmbeddingStore sentences;
  WordSet omega;
  for (int i = 0; i < 5; ++i) {
    std::string word = "w" + std::to_string(i);
    omega.insert(word);
    std::vector<float> v(6);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    sentences.add(relatedness_sentence(word), v);
  }
  std::vector<float> image(6);
  for (float& x : image) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<float> scaled = image;
  for (float& x : scaled) x *= 4.0f;  // power of two: exact

  std::map<std::string, double> a = relatedness_weights(omega, sentences, image);
  std::map<std::string, double> b = relatedness_weights(omega, sentences, scaled);
  double max_weight = 0.0;
  for (const auto& [word, weight] : a) {
    CHECK(weight == b.at(word));
    CHECK(weight >= 0.0);
    CHECK(weight <= 1.0);
    max_weight = std::max(max_weight, weight);
  }
  CHECK(max_weight == 1.0);
}

TEST_CASE("indicate_captions median rule") {
  // Target t has 5 GT captions; one is disjoint from the similars' captions.
  CaptionDataset dataset;
  dataset.add("t", {"a dog in the park", "a dog running in a park", "a brown dog outside",
                    "the dog plays in the park", "purple elephants dancing wildly"});
  dataset.add("s1", {"a dog in a park", "the dog runs in the park"});
  dataset.add("s2", {"a brown dog in the park"});
  IdfTable idf = idf_build(dataset);
  ImageGroup group{"t", {"s1", "s2"}, false};
  const std::vector<TokenSeq>& gts = dataset.at("t").tokenized;

  CaptionIndicator indicator = indicate_captions(gts, group, dataset, idf, IndicatorRule::kMedian);
  REQUIRE(indicator.distinctive.size() == 5);
  REQUIRE(indicator.scores.size() == 5);

  // brute-force recheck: strictly below the median is distinctive
  std::vector<double> sorted = indicator.scores;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[2];
  for (size_t i = 0; i < 5; ++i) {
    CHECK(indicator.distinctive[i] == (indicator.scores[i] < median));
  }
  // the disjoint caption scores 0 and must be distinctive
  CHECK(indicator.scores[4] == doctest::Approx(0.0));
  CHECK(indicator.distinctive[4]);
}

TEST_CASE("indicate_captions: identical captions are all common") {
  CaptionDataset dataset;
  dataset.add("t", {"a dog runs", "a dog runs", "a dog runs"});
  dataset.add("s", {"a dog walks"});
  IdfTable idf = idf_build(dataset);
  ImageGroup group{"t", {"s"}, false};
  CaptionIndicator indicator =
      indicate_captions(dataset.at("t").tokenized, group, dataset, idf, IndicatorRule::kMedian);
  for (bool d : indicator.distinctive) CHECK_FALSE(d);
}

TEST_CASE("indicate_captions threshold rule") {
  CaptionDataset dataset;
  dataset.add("t", {"a dog runs", "a cat sits"});
  dataset.add("s", {"a dog walks"});
  IdfTable idf = idf_build(dataset);
  ImageGroup group{"t", {"s"}, false};
  const std::vector<TokenSeq>& gts = dataset.at("t").tokenized;

  CaptionIndicator all = indicate_captions(gts, group, dataset, idf, IndicatorRule::kThreshold,
                                           std::numeric_limits<double>::infinity());
  for (bool d : all.distinctive) CHECK(d);

  CaptionIndicator none =
      indicate_captions(gts, group, dataset, idf, IndicatorRule::kThreshold, 0.0);
  for (bool d : none.distinctive) CHECK_FALSE(d);

  CHECK_THROWS_AS(indicate_captions({}, group, dataset, idf, IndicatorRule::kMedian),
                  ValidationError);
}
