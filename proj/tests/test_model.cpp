#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include "cloze/corpus.hpp"
#include "cloze/model.hpp"
#include "cloze/selection.hpp"

using namespace cloze;

namespace {

ClozeTask tiny_task() {
  ClozeTask task;
  task.id = "tiny";
  const char* words[] = {"the", "cat", "sat", "on", "the", "mat", "."};
  const char* tags[] = {"DET", "NOUN", "VERB", "ADP", "DET", "NOUN", "PUNCT"};
  for (int i = 0; i < 7; ++i)
    task.tokens.push_back({i, words[i], tags[i], i ? i - 1 : 0, ""});
  task.gaps.push_back({3, {"on"}});
  return task;
}

GapTagger tiny_model(const std::vector<ClozeTask>& tasks, int hidden = 16,
                     std::uint64_t seed = 7) {
  Vocab vocab = Vocab::build(tasks);
  EncoderConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.hidden_dim = hidden;
  cfg.num_heads = 4;
  cfg.num_layers = 1;
  cfg.max_sequence = 300;
  return GapTagger(cfg, std::move(vocab), seed);
}

struct TempPath {
  std::filesystem::path path;
  explicit TempPath(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("cloze_model_test_" + name);
  }
  ~TempPath() { std::remove(path.string().c_str()); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("proximity weights scale by penalty over distance") {
  // Gap at 2 in a passage of 6: distances 2,1,gap,1,2,3.
  auto w = proximity_weights(6, {2}, 3.0, 3);
  CHECK(w[0] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(w[1] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(w[2] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(w[3] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(w[4] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(w[5] == doctest::Approx(1.0).epsilon(1e-9));

  TokenLoss losses;
  losses.per_token = {0.2, 0.4, 0.6, 0.8, 1.0, 1.2};
  TokenLoss shaped = shape_loss(losses, {2}, 3.0, 3);
  for (int i = 0; i < 6; ++i)
    CHECK(shaped.per_token[i] == doctest::Approx(losses.per_token[i] * w[i]).epsilon(1e-12));
}

TEST_CASE("distance to the nearest gap decides the weight") {
  auto w = proximity_weights(10, {0, 9}, 6.0, 5);
  CHECK(w[0] == doctest::Approx(1.0));  // gap itself
  CHECK(w[1] == doctest::Approx(6.0));  // next to the gap at 0
  CHECK(w[4] == doctest::Approx(1.5));  // min(4, 5) = 4
  CHECK(w[5] == doctest::Approx(1.5));  // min(5, 4) = 4
  CHECK(w[8] == doctest::Approx(6.0));  // next to the gap at 9
  CHECK(w[9] == doctest::Approx(1.0));
}

TEST_CASE("window of one leaves every loss unchanged") {
  auto w = proximity_weights(8, {3}, 3.0, 1);
  for (double x : w) CHECK(x == 1.0);
  TokenLoss losses;
  losses.per_token = std::vector<double>(8, 0.7);
  TokenLoss shaped = shape_loss(losses, {3}, 3.0, 1);
  CHECK(shaped.per_token == losses.per_token);
}

TEST_CASE("no gaps means no shaping") {
  auto w = proximity_weights(5, {}, 3.0, 3);
  for (double x : w) CHECK(x == 1.0);
}

TEST_CASE("shaping never lightens a loss when penalty covers the window") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 40);
    const int max_distance = 2 + static_cast<int>(rng() % 5);
    const double penalty = static_cast<double>(max_distance - 1) +
                           static_cast<double>(rng() % 100) / 25.0;
    std::set<int> gaps;
    const int n_gaps = 1 + static_cast<int>(rng() % 4);
    for (int g = 0; g < n_gaps; ++g) gaps.insert(static_cast<int>(rng() % n));
    auto w = proximity_weights(n, gaps, penalty, max_distance);
    for (int i = 0; i < n; ++i) {
      CHECK(w[i] >= 1.0);
      if (gaps.count(i)) CHECK(w[i] == 1.0);
    }
  }
}

TEST_CASE("proximity weight validation") {
  CHECK_THROWS_AS(proximity_weights(5, {0}, -1.0, 3), ValidationError);
  CHECK_THROWS_AS(proximity_weights(5, {0}, 3.0, 0), ValidationError);
  CHECK_THROWS_AS(proximity_weights(-1, {0}, 3.0, 3), ValidationError);
}

TEST_CASE("training config validation") {
  TrainingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.batch_size = 1;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("encode concatenates own and dependency-head states") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  const int h = model.config().hidden_dim;

  Mat reps = model.encode(task.tokens);
  REQUIRE(reps.rows() == 7);
  REQUIRE(reps.cols() == 2 * h);

  // Token 0 is its own head: both halves identical.
  CHECK((reps.block(0, 0, 1, h) - reps.block(0, h, 1, h)).cwiseAbs().maxCoeff() == 0.0);
  // Token 2's head is token 1: second half equals token 1's first half.
  CHECK((reps.block(2, h, 1, h) - reps.block(1, 0, 1, h)).cwiseAbs().maxCoeff() == 0.0);

  // Re-pointing one head changes only that row's second half.
  std::vector<Token> moved = task.tokens;
  moved[2].dep_head = 5;
  Mat reps2 = model.encode(moved);
  CHECK((reps2.block(2, 0, 1, h) - reps.block(2, 0, 1, h)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((reps2.block(2, h, 1, h) - reps.block(2, h, 1, h)).cwiseAbs().maxCoeff() > 0.0);
  CHECK((reps2.block(3, 0, 1, 2 * h) - reps.block(3, 0, 1, 2 * h)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("one confidence per word even when words split into pieces") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});

  // "matting" is unseen as a whole, so it decomposes into several pieces.
  ClozeTask longer = task;
  longer.tokens[5].surface = "matting";
  GapScores scores = model.predict(longer);
  CHECK(scores.task_id == "tiny");
  CHECK(scores.confidences.size() == longer.tokens.size());
  for (double c : scores.confidences) {
    CHECK(c > 0.0);
    CHECK(c < 1.0);
  }
}

TEST_CASE("passages longer than max_sequence are rejected with advice") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  ClozeTask big;
  big.id = "big";
  for (int i = 0; i < 301; ++i) big.tokens.push_back({i, "cat", "NOUN", 0, ""});
  try {
    model.predict(big);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("shorter tasks") != std::string::npos);
  }
}

TEST_CASE("predict is deterministic") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  GapScores a = model.predict(task);
  GapScores b = model.predict(task);
  CHECK(a.confidences == b.confidences);
}

TEST_CASE("generate_masked yields a distribution per masked word") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  std::vector<Token> text = reconstruct_text(task);

  CHECK(model.generate_masked(text, {}).empty());

  auto dists = model.generate_masked(text, {1, 3});
  REQUIRE(dists.size() == 2);
  REQUIRE(dists.count(1) == 1);
  REQUIRE(dists.count(3) == 1);
  for (const auto& [pos, dist] : dists) {
    CHECK(dist.size() == model.vocab().size());
    CHECK(dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(dist.minCoeff() >= 0.0);
  }

  CHECK_THROWS_AS(model.generate_masked(text, {99}), ValidationError);
}

TEST_CASE("masking changes the prediction at the masked position") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  std::vector<Token> text = reconstruct_text(task);
  auto masked_one = model.generate_masked(text, {3});
  auto masked_two = model.generate_masked(text, {1, 3});
  // Hiding another word shifts the evidence available at position 3.
  CHECK((masked_one.at(3) - masked_two.at(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("disabling the auxiliary objective zeroes the generation branch") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  TrainingConfig cfg;
  cfg.auxiliary_objective = false;
  LossBreakdown loss = model.evaluate_loss(task, cfg);
  CHECK(loss.generation == 0.0);
  CHECK(loss.masked_words == 0);
  CHECK(loss.total == doctest::Approx(loss.classification).epsilon(1e-12));
}

TEST_CASE("gold-masked loss counts every gold gap") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  TrainingConfig cfg;
  cfg.mask_source = TrainingConfig::MaskSource::kGold;
  LossBreakdown loss = model.evaluate_loss(task, cfg);
  CHECK(loss.masked_words == 1);
  CHECK(loss.generation > 0.0);
  CHECK(loss.total ==
        doctest::Approx(loss.classification + loss.generation).epsilon(1e-12));
}

TEST_CASE("training with the auxiliary objective off never touches the generation head") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});

  std::map<std::string, Mat> before;
  for (const ParamRef& p : model.parameters()) before[p.name] = *p.value;

  TrainingConfig cfg;
  cfg.auxiliary_objective = false;
  cfg.learning_rate = 1e-2;
  for (int step = 0; step < 3; ++step) model.training_step(task, cfg);

  bool cls_moved = false;
  for (const ParamRef& p : model.parameters()) {
    const bool gen_param = p.name.rfind("gen.", 0) == 0;
    const double delta = (*p.value - before[p.name]).cwiseAbs().maxCoeff();
    if (gen_param) {
      CHECK_MESSAGE(delta == 0.0, p.name << " moved by " << delta);
    } else if (p.name.rfind("cls.", 0) == 0) {
      if (delta > 0.0) cls_moved = true;
    }
  }
  CHECK(cls_moved);
}

TEST_CASE("a single task can be memorized") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task}, 16);

  TrainingConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.mask_source = TrainingConfig::MaskSource::kGold;

  const double first = model.evaluate_loss(task, cfg).total;
  double last = first;
  for (int step = 0; step < 200; ++step) {
    last = model.training_step(task, cfg).total;
    if (last < 0.05 * first) break;
  }
  CHECK(last < 0.1 * first);

  GapScores scores = model.predict(task);
  for (int i = 0; i < static_cast<int>(scores.confidences.size()); ++i) {
    if (i == 3)
      CHECK(scores.confidences[i] > 0.5);
    else
      CHECK(scores.confidences[i] < 0.5);
  }

  // The generation head reproduces the hidden word.
  std::vector<Token> text = reconstruct_text(task);
  auto dists = model.generate_masked(text, {3});
  int argmax = 0;
  dists.at(3).maxCoeff(&argmax);
  CHECK(argmax == model.vocab().find("on"));
}

TEST_CASE("checkpoints round-trip exactly") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  model.training_step(task, cfg);

  TempPath file("ckpt.bin");
  model.save_checkpoint(file.str());
  GapTagger loaded = GapTagger::load_checkpoint(file.str());

  CHECK(loaded.config().hidden_dim == model.config().hidden_dim);
  CHECK(loaded.vocab().size() == model.vocab().size());
  CHECK(loaded.predict(task).confidences == model.predict(task).confidences);
  CHECK(loaded.evaluate_loss(task, cfg).total ==
        doctest::Approx(model.evaluate_loss(task, cfg).total).epsilon(1e-15));
}

TEST_CASE("corrupted checkpoints are refused") {
  ClozeTask task = tiny_task();
  GapTagger model = tiny_model({task});
  TempPath file("corrupt.bin");
  model.save_checkpoint(file.str());

  std::fstream f(file.str(), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(2);
  f.put('X');  // break the magic
  f.close();
  CHECK_THROWS_AS(GapTagger::load_checkpoint(file.str()), ParseError);

  CHECK_THROWS_AS(GapTagger::load_checkpoint("/nonexistent/ckpt.bin"), ParseError);
}

TEST_CASE("train_model shuffles per epoch and reports stats") {
  std::vector<ClozeTask> tasks;
  for (int t = 0; t < 4; ++t) {
    ClozeTask task = tiny_task();
    task.id = "t" + std::to_string(t);
    tasks.push_back(task);
  }
  GapTagger model = tiny_model(tasks);

  TrainingConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.seed = 4;

  std::ostringstream log;
  auto stats = train_model(model, tasks, cfg, &log);
  REQUIRE(stats.size() == 5);
  CHECK(stats.back().mean_loss < stats.front().mean_loss);
  CHECK(log.str().find("epoch 1/5") != std::string::npos);
  CHECK(log.str().find("epoch 5/5") != std::string::npos);

  CHECK_THROWS_AS(train_model(model, {}, cfg), ValidationError);
}
