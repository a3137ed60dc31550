#include <atomic>
#include <random>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/option_miner.hpp"
#include "divek/orchestrator.hpp"
#include "divek/prompts.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;
using divek::testing::rollouts_of;
using divek::testing::test_image;
using divek::testing::well_formed;

namespace {

// Open-ended prompts get `open`; MCQ prompts get `mcq_reply`.
class RecordingBackend : public InferenceBackend {
 public:
  std::vector<std::string> open;
  std::string mcq_reply = "<think>x</think> <answer>B</answer>";
  std::atomic<int> mcq_calls{0};
  std::optional<QueryPrompt> last_mcq;
  std::optional<SamplingParams> last_mcq_params;

  std::vector<std::string> generate(const ImageRef&, const QueryPrompt& query,
                                    const SamplingParams& params) override {
    if (query.template_id == templates::kMcq) {
      ++mcq_calls;
      last_mcq = query;
      last_mcq_params = params;
      return std::vector<std::string>(params.K, mcq_reply);
    }
    std::vector<std::string> out(open.begin(), open.begin() + params.K);
    return out;
  }
  Json describe() const override { return Json{{"kind", "recording"}}; }
};

InferenceOptions options_for(int K) {
  InferenceOptions o;
  o.domain_noun = "bird";
  o.category_list = {normalize_category("Sooty Albatross"), normalize_category("Laysan Albatross"),
                     normalize_category("Black-footed Albatross")};
  o.K = K;
  o.params.K = K;
  o.m = 5;
  o.seed = 77;
  return o;
}

}  // namespace

TEST_CASE("a single mined category skips step 2") {
  RecordingBackend be;
  be.open = std::vector<std::string>(4, well_formed("Laysan Albatross"));
  const auto rec = two_step_infer(be, test_image("i1"), options_for(4), normalize_category("Laysan Albatross"));
  CHECK(be.mcq_calls == 0);
  REQUIRE(rec.final_category);
  CHECK(rec.final_category->raw == "Laysan Albatross");
  CHECK_FALSE(rec.final_letter);
  CHECK(rec.step1_contains_gt == true);
  CHECK(rec.K_used == 4);
}

TEST_CASE("step 2 resolves the replied letter against the shuffled options") {
  RecordingBackend be;
  be.open = {well_formed("Sooty Albatross"), well_formed("Laysan Albatross"),
             well_formed("Sooty Albatross"), "garbage"};
  const auto opts = options_for(4);
  const auto rec = two_step_infer(be, test_image("i2"), opts, normalize_category("Black-footed Albatross"));
  CHECK(be.mcq_calls == 1);
  CHECK(be.last_mcq_params->temperature == 0.0);
  CHECK(be.last_mcq_params->K == 1);
  REQUIRE(rec.step1_options);
  CHECK(rec.step1_options->size() == 2);
  CHECK((*rec.step1_options)[0].raw == "Sooty Albatross");
  // No injection at test time.
  CHECK(rec.step1_contains_gt == false);

  const auto lettered = shuffle_options(*rec.step1_options, derive_seed(derive_seed(77, "i2"), "K4"));
  REQUIRE(rec.final_letter);
  CHECK(*rec.final_letter == 'B');
  CHECK(same_category(*rec.final_category, lettered[1].second));
}

TEST_CASE("an unresolvable step-2 reply yields no prediction") {
  RecordingBackend be;
  be.open = {well_formed("Sooty Albatross"), well_formed("Laysan Albatross")};
  be.mcq_reply = "<think>hmm</think> <answer>Z</answer>";
  const auto rec = two_step_infer(be, test_image("i3"), options_for(2));
  CHECK_FALSE(rec.final_category);
  CHECK_FALSE(rec.step1_contains_gt);
  CHECK(rec.step2_raw == be.mcq_reply);
}

TEST_CASE("a step-2 reply naming an option is accepted") {
  RecordingBackend be;
  be.open = {well_formed("Sooty Albatross"), well_formed("Laysan Albatross")};
  be.mcq_reply = "<think>hmm</think> <answer>Laysan Albatross</answer>";
  const auto rec = two_step_infer(be, test_image("i4"), options_for(2));
  REQUIRE(rec.final_category);
  CHECK(rec.final_category->raw == "Laysan Albatross");
}

TEST_CASE("nothing parsable gives an empty option set") {
  RecordingBackend be;
  be.open = {"nope", "still nope"};
  const auto rec = two_step_infer(be, test_image("i5"), options_for(2), normalize_category("Sooty Albatross"));
  CHECK(rec.step1_options->empty());
  CHECK(rec.step1_contains_gt == false);
  CHECK_FALSE(rec.final_category);
  CHECK(be.mcq_calls == 0);
}

TEST_CASE("point-mass world never calls step 2") {
  auto world = std::make_shared<const ConfusionWorld>(make_identity_world(5, 5, 0.0));
  ConfusionWorldBackend be(world, 1);
  const auto imgs = draw_images(*world, 20, 3);
  be.register_images(imgs);
  InferenceOptions o;
  o.category_list = world->category_names();
  o.K = 10;
  o.params.K = 10;
  for (const auto& img : imgs) {
    const auto rec = two_step_infer(be, img.image, o, normalize_category(world->canonical_name(img.category)));
    CHECK(rec.step1_options->size() == 1);
    CHECK_FALSE(rec.step2_raw);
    CHECK(world->index_of(*rec.final_category) == img.category);
  }
}

TEST_CASE("final category is always one of the step-1 options") {
  WorldConfig wc;
  wc.num_categories = 15;
  wc.format_error_rate = 0.2;
  auto world = std::make_shared<const ConfusionWorld>(make_world(wc));
  ConfusionWorldBackend be(world, 2);
  const auto imgs = draw_images(*world, 200, 4);
  be.register_images(imgs);
  InferenceOptions o;
  o.category_list = world->category_names();
  std::mt19937_64 rng(10);
  for (const auto& img : imgs) {
    o.K = 1 + static_cast<int>(rng() % 20);
    o.params.K = o.K;
    o.m = 2 + static_cast<int>(rng() % 4);
    const auto rec = two_step_infer(be, img.image, o);
    CHECK(static_cast<int>(rec.step1_options->size()) <= o.m);
    if (rec.final_category) {
      bool found = false;
      for (const auto& c : *rec.step1_options) found = found || same_category(c, *rec.final_category);
      CHECK(found);
    }
  }
}

TEST_CASE("single step") {
  RecordingBackend be;
  be.open = {well_formed("Laysan Albatross"), well_formed("Sooty Albatross")};
  const auto rec = single_step_infer(be, test_image("s"), options_for(2));
  CHECK(rec.K_used == 1);
  CHECK(rec.mode == InferenceMode::SingleStep);
  CHECK(rec.final_category->raw == "Laysan Albatross");

  be.open = {"bad"};
  CHECK_FALSE(single_step_infer(be, test_image("s"), options_for(1)).final_category);
}

TEST_CASE("consistency vote") {
  const auto r = rollouts_of("c", {"Sooty Albatross", "Laysan Albatross", "Laysan Albatross",
                                   std::nullopt, "Sooty Albatross"});
  // Tie 2-2 goes to the first seen.
  CHECK(consistency_predict(r)->raw == "Sooty Albatross");
  const auto r2 = rollouts_of("c", {"Sooty Albatross", "Laysan Albatross", "Laysan Albatross"});
  CHECK(consistency_predict(r2)->raw == "Laysan Albatross");
  CHECK_FALSE(consistency_predict(rollouts_of("c", {std::nullopt, std::nullopt})));

  const auto rec = consistency_record(test_image("c"), r, normalize_category("laysan albatross"));
  CHECK(rec.step1_contains_gt == true);
  CHECK(rec.K_used == 5);
}

TEST_CASE("pass at k") {
  const auto gt = normalize_category("Laysan Albatross");
  const auto r = rollouts_of("p", {"Sooty Albatross", std::nullopt, "Laysan Albatross", "Sooty Albatross"});
  CHECK_FALSE(pass_at_k(r, gt, 0));
  CHECK_FALSE(pass_at_k(r, gt, 2));
  CHECK(pass_at_k(r, gt, 3));
  CHECK(pass_at_k(r, gt, 4));
  CHECK_THROWS_AS(pass_at_k(r, gt, 5), PreconditionError);

  // Monotone in k on random rollouts, and containment in the mined set
  // matches pass@K whenever at most m categories were seen.
  std::mt19937_64 rng(12);
  const std::vector<std::string> names{"Sooty Albatross", "Laysan Albatross", "Black-footed Albatross",
                                       "Rhinoceros Auklet"};
  for (int t = 0; t < 300; ++t) {
    std::vector<std::optional<std::string>> ans;
    const int K = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < K; ++i) {
      const int pick = static_cast<int>(rng() % 5);
      ans.push_back(pick == 4 ? std::nullopt : std::optional<std::string>(names[pick]));
    }
    const auto rs = rollouts_of("q", ans);
    const auto g = normalize_category(names[rng() % 4]);
    bool prev = false;
    for (int k = 0; k <= K; ++k) {
      const bool now = pass_at_k(rs, g, k);
      CHECK((!prev || now));
      prev = now;
    }
    RecordingBackend be;
    be.open.clear();
    for (const auto& a : ans) be.open.push_back(a ? well_formed(*a) : "nothing");
    const auto rec = two_step_from_rollouts(be, test_image("q"), rs, options_for(K), g);
    CHECK(*rec.step1_contains_gt == pass_at_k(rs, g, K));
  }
}

TEST_CASE("prediction json round trip") {
  PredictionRecord p;
  p.image = test_image("x");
  p.mode = InferenceMode::Consistency;
  p.step1_options = std::vector<CategoryName>{normalize_category("A b")};
  p.step1_contains_gt = false;
  p.final_category = normalize_category("A b");
  p.final_letter = 'C';
  p.K_used = 7;
  const auto j = prediction_to_json(p);
  const auto q = prediction_from_json(j);
  CHECK(q.image.id == "x");
  CHECK(q.mode == InferenceMode::Consistency);
  CHECK(q.final_letter == 'C');
  CHECK(q.K_used == 7);
  CHECK(prediction_to_json(q) == j);

  PredictionRecord empty;
  empty.image = test_image("y");
  const auto je = prediction_to_json(empty);
  CHECK(je["final_category"].is_null());
  CHECK_THROWS_AS(inference_mode_from_string("three-step"), ConfigError);
}
