#ifndef CLOZE_MODEL_HPP_
#define CLOZE_MODEL_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cloze/encoder.hpp"
#include "cloze/types.hpp"
#include "cloze/vocab.hpp"

namespace cloze {

struct TrainingConfig {
  double learning_rate = 3e-5;
  int batch_size = 1;
  int epochs = 4;
  double proximity_penalty = 3.0;   // weight applied near gaps
  int proximity_window = 3;         // distances below this are penalized
  bool auxiliary_objective = true;  // regenerate masked gap words
  enum class MaskSource { kPredicted, kGold };
  MaskSource mask_source = MaskSource::kPredicted;
  std::uint64_t seed = 0;

  void validate() const;
};

// Multiplies the loss of every non-gap token within `max_distance` of its
// nearest gap by penalty/distance, spreading predicted gaps apart. Gap
// tokens themselves and tokens at distance >= max_distance are unchanged.
TokenLoss shape_loss(const TokenLoss& losses, const std::set<int>& gap_positions,
                     double penalty, int max_distance);

// The per-token weights shape_loss applies (1 where unchanged).
std::vector<double> proximity_weights(int n_tokens, const std::set<int>& gap_positions,
                                      double penalty, int max_distance);

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double generation = 0.0;
  int masked_words = 0;
};

// Dual-objective token tagger. A shared transformer encoder feeds two
// branches: a discrimination head classifying each word as gap/non-gap, and
// a generation head that re-generates the word at masked positions (output
// projection tied to the input embeddings). Word representations are the
// encoder state of the word's first piece concatenated with that of its
// dependency head.
class GapTagger {
 public:
  GapTagger(const EncoderConfig& config, Vocab vocab, std::uint64_t init_seed);

  // One vector per word: [own state | dependency head's state], so the
  // output has 2*hidden_dim columns. A root token repeats its own state.
  Mat encode(const std::vector<Token>& tokens) const;

  // Per-word probability of the gap class (two-way softmax).
  GapScores classify_tokens(const std::string& task_id, const Mat& representations) const;

  // Full-vocabulary distribution at each masked word, predicted from the
  // passage with those words hidden. Unmasked positions are absent.
  std::map<int, Eigen::VectorXd> generate_masked(const std::vector<Token>& tokens,
                                                 const std::set<int>& mask_positions) const;

  GapScores predict(const ClozeTask& task) const;

  // Loss of the current parameters on one task, no update. Exact value that
  // training_step differentiates; used by the finite-difference checks.
  LossBreakdown evaluate_loss(const ClozeTask& task, const TrainingConfig& config) const;

  // Accumulates gradients of the summed two-branch loss for one task.
  LossBreakdown accumulate_gradients(const ClozeTask& task, const TrainingConfig& config);

  // Single gradient step on one task (zero grads, accumulate, update).
  LossBreakdown training_step(const ClozeTask& task, const TrainingConfig& config);

  void apply_gradients(double learning_rate);
  void zero_grads();

  std::vector<ParamRef> parameters();

  void save_checkpoint(const std::string& path) const;
  static GapTagger load_checkpoint(const std::string& path);

  const EncoderConfig& config() const { return encoder_.config(); }
  const Vocab& vocab() const { return vocab_; }

 private:
  struct Forward;
  Forward run_forward(const std::vector<Token>& tokens, bool with_tape) const;
  LossBreakdown run_loss(const ClozeTask& task, const TrainingConfig& config,
                         bool with_grad);

  Vocab vocab_;
  TransformerEncoder encoder_;
  Dense cls_head_;    // 2*hidden -> 2 (negative, positive)
  Dense gen_dense_;   // 2*hidden -> hidden
  LayerNorm gen_ln_;
  Mat gen_bias_;      // 1 x vocab; weights tied to token embeddings
  Mat dgen_bias_;

  struct AdamState;
  std::shared_ptr<AdamState> adam_;
};

struct EpochStats {
  double mean_loss = 0.0;
  double mean_classification = 0.0;
  double mean_generation = 0.0;
};

// Runs the configured number of epochs over the tasks (order reshuffled per
// epoch from config.seed), accumulating gradients over batch_size tasks per
// update.
std::vector<EpochStats> train_model(GapTagger& model, const std::vector<ClozeTask>& tasks,
                                    const TrainingConfig& config,
                                    std::ostream* log = nullptr);

}  // namespace cloze

#endif  // CLOZE_MODEL_HPP_
