#include "cloze/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "cloze/nn.hpp"
#include "cloze/rng.hpp"

namespace cloze {

namespace {

using nlohmann::json;

constexpr double kGapThreshold = 0.5;
constexpr double kLogFloor = 1e-300;
constexpr char kCheckpointMagic[8] = {'C', 'L', 'Z', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

double safe_nll(double p) { return -std::log(std::max(p, kLogFloor)); }

}  // namespace

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ValidationError("training config: learning_rate must be positive");
  if (batch_size < 1)
    throw ValidationError("training config: batch_size must be at least 1");
  if (epochs < 1)
    throw ValidationError("training config: epochs must be at least 1");
  if (proximity_penalty < 0.0)
    throw ValidationError("training config: proximity_penalty must be non-negative");
  if (proximity_window < 1)
    throw ValidationError("training config: proximity_window must be at least 1");
}

std::vector<double> proximity_weights(int n_tokens, const std::set<int>& gap_positions,
                                      double penalty, int max_distance) {
  if (n_tokens < 0)
    throw ValidationError("proximity weights: negative token count");
  if (penalty < 0.0)
    throw ValidationError("proximity weights: penalty must be non-negative");
  if (max_distance < 1)
    throw ValidationError("proximity weights: max_distance must be at least 1");
  std::vector<double> weights(static_cast<size_t>(n_tokens), 1.0);
  if (gap_positions.empty()) return weights;
  for (int i = 0; i < n_tokens; ++i) {
    auto it = gap_positions.lower_bound(i);
    long d = std::numeric_limits<long>::max();
    if (it != gap_positions.end()) d = std::min(d, static_cast<long>(*it) - i);
    if (it != gap_positions.begin())
      d = std::min(d, static_cast<long>(i) - *std::prev(it));
    if (d > 0 && d < max_distance)
      weights[static_cast<size_t>(i)] = penalty / static_cast<double>(d);
  }
  return weights;
}

TokenLoss shape_loss(const TokenLoss& losses, const std::set<int>& gap_positions,
                     double penalty, int max_distance) {
  const int n = static_cast<int>(losses.per_token.size());
  const std::vector<double> weights =
      proximity_weights(n, gap_positions, penalty, max_distance);
  TokenLoss shaped = losses;
  for (int i = 0; i < n; ++i) shaped.per_token[i] *= weights[i];
  return shaped;
}

struct GapTagger::AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, std::pair<Mat, Mat>> slots;  // first moment, second moment
};

struct GapTagger::Forward {
  Vocab::Encoded enc;
  EncoderTape tape;  // filled only when requested
  Mat hidden;        // pieces x hidden
  Mat reps;          // words x 2*hidden
};

GapTagger::GapTagger(const EncoderConfig& config, Vocab vocab, std::uint64_t init_seed)
    : vocab_(std::move(vocab)), encoder_(config, init_seed) {
  if (config.vocab_size != vocab_.size())
    throw ValidationError("model: encoder vocab_size " +
                          std::to_string(config.vocab_size) +
                          " does not match vocabulary of " +
                          std::to_string(vocab_.size()) + " pieces");
  const int h = config.hidden_dim;
  // Decorrelate the head stream from the encoder stream.
  std::mt19937_64 rng(init_seed ^ 0x9E3779B97F4A7C15ull);
  auto init = [&rng](long rows, long cols) {
    Mat m(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) m(i, j) = 0.02 * normal01(rng);
    return m;
  };
  cls_head_.weight = init(2 * h, 2);
  cls_head_.bias = Mat::Zero(1, 2);
  cls_head_.dweight = Mat::Zero(2 * h, 2);
  cls_head_.dbias = Mat::Zero(1, 2);
  gen_dense_.weight = init(2 * h, h);
  gen_dense_.bias = Mat::Zero(1, h);
  gen_dense_.dweight = Mat::Zero(2 * h, h);
  gen_dense_.dbias = Mat::Zero(1, h);
  gen_ln_.gain = Mat::Ones(1, h);
  gen_ln_.bias = Mat::Zero(1, h);
  gen_ln_.dgain = Mat::Zero(1, h);
  gen_ln_.dbias = Mat::Zero(1, h);
  gen_bias_ = Mat::Zero(1, vocab_.size());
  dgen_bias_ = Mat::Zero(1, vocab_.size());
  adam_ = std::make_shared<AdamState>();
}

GapTagger::Forward GapTagger::run_forward(const std::vector<Token>& tokens,
                                          bool with_tape) const {
  const int n = static_cast<int>(tokens.size());
  if (n == 0) throw ValidationError("model: cannot encode an empty token sequence");
  std::vector<std::string> surfaces;
  surfaces.reserve(tokens.size());
  for (const Token& t : tokens) {
    if (t.surface.empty())
      throw ValidationError("model: empty token surface at index " +
                            std::to_string(t.index));
    if (t.dep_head < 0 || t.dep_head >= n)
      throw ValidationError("model: dep_head " + std::to_string(t.dep_head) +
                            " outside passage of length " + std::to_string(n));
    surfaces.push_back(lowercase(t.surface));
  }
  Forward fw;
  fw.enc = vocab_.encode_words(surfaces);
  const int pieces = static_cast<int>(fw.enc.ids.size());
  if (pieces > encoder_.config().max_sequence)
    throw ValidationError(
        "model: passage expands to " + std::to_string(pieces) +
        " pieces but the encoder accepts at most " +
        std::to_string(encoder_.config().max_sequence) +
        "; split the passage into shorter tasks before encoding");
  fw.hidden = encoder_.forward(fw.enc.ids, with_tape ? &fw.tape : nullptr);

  const int h = encoder_.config().hidden_dim;
  fw.reps.resize(n, 2 * h);
  for (int w = 0; w < n; ++w) {
    const int own = fw.enc.first_subword[w];
    const int head = fw.enc.first_subword[tokens[w].dep_head];
    fw.reps.block(w, 0, 1, h) = fw.hidden.row(own);
    fw.reps.block(w, h, 1, h) = fw.hidden.row(head);
  }
  return fw;
}

Mat GapTagger::encode(const std::vector<Token>& tokens) const {
  return run_forward(tokens, false).reps;
}

GapScores GapTagger::classify_tokens(const std::string& task_id,
                                     const Mat& representations) const {
  if (representations.cols() != 2 * encoder_.config().hidden_dim)
    throw ValidationError("model: representation width " +
                          std::to_string(representations.cols()) +
                          " does not match 2*hidden_dim");
  const Mat probs = softmax_rows(cls_head_.forward(representations));
  GapScores scores;
  scores.task_id = task_id;
  scores.confidences.resize(static_cast<size_t>(probs.rows()));
  for (long w = 0; w < probs.rows(); ++w)
    scores.confidences[static_cast<size_t>(w)] = probs(w, 1);
  return scores;
}

GapScores GapTagger::predict(const ClozeTask& task) const {
  return classify_tokens(task.id, encode(task.tokens));
}

std::map<int, Eigen::VectorXd> GapTagger::generate_masked(
    const std::vector<Token>& tokens, const std::set<int>& mask_positions) const {
  std::map<int, Eigen::VectorXd> out;
  if (mask_positions.empty()) return out;
  const int n = static_cast<int>(tokens.size());
  for (int p : mask_positions)
    if (p < 0 || p >= n)
      throw ValidationError("model: mask position " + std::to_string(p) +
                            " outside passage of length " + std::to_string(n));
  Forward fw = run_forward(tokens, false);

  std::vector<int> masked_ids = fw.enc.ids;
  for (int w : mask_positions) {
    const int first = fw.enc.first_subword[w];
    const int count = fw.enc.pieces_of(w);
    for (int k = 0; k < count; ++k) masked_ids[first + k] = Vocab::kMask;
  }
  const Mat hidden = encoder_.forward(masked_ids);

  const int h = encoder_.config().hidden_dim;
  const Mat& emb = encoder_.token_embeddings();
  for (int w : mask_positions) {
    Mat rep(1, 2 * h);
    rep.block(0, 0, 1, h) = hidden.row(fw.enc.first_subword[w]);
    rep.block(0, h, 1, h) = hidden.row(fw.enc.first_subword[tokens[w].dep_head]);
    const Mat act = gelu(gen_dense_.forward(rep));
    const Mat normed = gen_ln_.forward(act);
    const Mat logits = normed * emb.transpose() + gen_bias_;
    const Mat probs = softmax_rows(logits);
    out[w] = probs.row(0).transpose();
  }
  return out;
}

LossBreakdown GapTagger::run_loss(const ClozeTask& task, const TrainingConfig& config,
                                  bool with_grad) {
  config.validate();
  validate_task(task);
  const int n = static_cast<int>(task.tokens.size());
  if (n == 0) throw ValidationError("model: task " + task.id + " has no tokens");
  const int h = encoder_.config().hidden_dim;

  Forward fw = run_forward(task.tokens, with_grad);
  const std::vector<int> gold_vec = task.gap_positions();
  const std::set<int> gold(gold_vec.begin(), gold_vec.end());

  // Gap classification over the clean passage, shaped so that mistakes next
  // to a gold gap cost more than mistakes far away.
  const Mat logits = cls_head_.forward(fw.reps);
  const Mat probs = softmax_rows(logits);
  const std::vector<double> weights =
      proximity_weights(n, gold, config.proximity_penalty, config.proximity_window);

  LossBreakdown breakdown;
  for (int w = 0; w < n; ++w) {
    const int label = gold.count(w) ? 1 : 0;
    breakdown.classification += weights[w] * safe_nll(probs(w, label));
  }
  breakdown.classification /= n;

  if (with_grad) {
    Mat dlogits(n, 2);
    for (int w = 0; w < n; ++w) {
      const int label = gold.count(w) ? 1 : 0;
      const double scale = weights[w] / n;
      dlogits(w, 0) = scale * (probs(w, 0) - (label == 0 ? 1.0 : 0.0));
      dlogits(w, 1) = scale * (probs(w, 1) - (label == 1 ? 1.0 : 0.0));
    }
    const Mat dreps = cls_head_.backward(fw.reps, dlogits);
    Mat d_hidden = Mat::Zero(fw.hidden.rows(), h);
    for (int w = 0; w < n; ++w) {
      d_hidden.row(fw.enc.first_subword[w]) += dreps.block(w, 0, 1, h);
      d_hidden.row(fw.enc.first_subword[task.tokens[w].dep_head]) +=
          dreps.block(w, h, 1, h);
    }
    encoder_.backward(fw.tape, d_hidden);
  }

  // Regeneration of the hidden words from a second, masked pass. The word a
  // gap deletes must stay recoverable from its context.
  if (config.auxiliary_objective) {
    std::set<int> masked;
    if (config.mask_source == TrainingConfig::MaskSource::kGold) {
      masked = gold;
    } else {
      for (int w = 0; w < n; ++w)
        if (probs(w, 1) > kGapThreshold) masked.insert(w);
    }
    breakdown.masked_words = static_cast<int>(masked.size());
    if (!masked.empty()) {
      std::vector<int> masked_ids = fw.enc.ids;
      for (int w : masked) {
        const int first = fw.enc.first_subword[w];
        const int count = fw.enc.pieces_of(w);
        for (int k = 0; k < count; ++k) masked_ids[first + k] = Vocab::kMask;
      }
      EncoderTape tape2;
      const Mat hidden2 = encoder_.forward(masked_ids, with_grad ? &tape2 : nullptr);
      const Mat& emb = encoder_.token_embeddings();
      const double m = static_cast<double>(masked.size());
      Mat d_hidden2;
      if (with_grad) d_hidden2 = Mat::Zero(hidden2.rows(), h);

      for (int w : masked) {
        const int own = fw.enc.first_subword[w];
        const int head = fw.enc.first_subword[task.tokens[w].dep_head];
        Mat rep(1, 2 * h);
        rep.block(0, 0, 1, h) = hidden2.row(own);
        rep.block(0, h, 1, h) = hidden2.row(head);
        const Mat pre = gen_dense_.forward(rep);
        const Mat act = gelu(pre);
        LayerNorm::Tape ln_tape;
        const Mat normed = gen_ln_.forward(act, with_grad ? &ln_tape : nullptr);
        const Mat word_logits = normed * emb.transpose() + gen_bias_;
        const Mat word_probs = softmax_rows(word_logits);
        const int target = fw.enc.ids[own];
        breakdown.generation += safe_nll(word_probs(0, target));

        if (with_grad) {
          Mat dlog = word_probs / m;
          dlog(0, target) -= 1.0 / m;
          dgen_bias_ += dlog;
          const Mat dnormed = dlog * emb;
          encoder_.token_embedding_grad() += dlog.transpose() * normed;
          const Mat dact = gen_ln_.backward(ln_tape, dnormed);
          const Mat dpre = gelu_backward(pre, dact);
          const Mat drep = gen_dense_.backward(rep, dpre);
          d_hidden2.row(own) += drep.block(0, 0, 1, h);
          d_hidden2.row(head) += drep.block(0, h, 1, h);
        }
      }
      breakdown.generation /= m;
      if (with_grad) encoder_.backward(tape2, d_hidden2);
    }
  }

  breakdown.total = breakdown.classification + breakdown.generation;
  return breakdown;
}

LossBreakdown GapTagger::evaluate_loss(const ClozeTask& task,
                                       const TrainingConfig& config) const {
  // with_grad=false touches no mutable state.
  return const_cast<GapTagger*>(this)->run_loss(task, config, false);
}

LossBreakdown GapTagger::accumulate_gradients(const ClozeTask& task,
                                              const TrainingConfig& config) {
  return run_loss(task, config, true);
}

LossBreakdown GapTagger::training_step(const ClozeTask& task,
                                       const TrainingConfig& config) {
  zero_grads();
  const LossBreakdown breakdown = run_loss(task, config, true);
  apply_gradients(config.learning_rate);
  return breakdown;
}

void GapTagger::apply_gradients(double learning_rate) {
  if (!(learning_rate > 0.0))
    throw ValidationError("model: learning_rate must be positive");
  AdamState& st = *adam_;
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (ParamRef& p : parameters()) {
    auto& slot = st.slots[p.name];
    Mat& m = slot.first;
    Mat& v = slot.second;
    if (m.size() == 0) {
      m = Mat::Zero(p.value->rows(), p.value->cols());
      v = Mat::Zero(p.value->rows(), p.value->cols());
    }
    m = st.beta1 * m + (1.0 - st.beta1) * (*p.grad);
    v = (st.beta2 * v.array() + (1.0 - st.beta2) * p.grad->array().square()).matrix();
    p.value->array() -=
        learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
  }
}

void GapTagger::zero_grads() {
  encoder_.zero_grads();
  cls_head_.dweight.setZero();
  cls_head_.dbias.setZero();
  gen_dense_.dweight.setZero();
  gen_dense_.dbias.setZero();
  gen_ln_.dgain.setZero();
  gen_ln_.dbias.setZero();
  dgen_bias_.setZero();
}

std::vector<ParamRef> GapTagger::parameters() {
  std::vector<ParamRef> out = encoder_.parameters();
  out.push_back({"cls.weight", &cls_head_.weight, &cls_head_.dweight});
  out.push_back({"cls.bias", &cls_head_.bias, &cls_head_.dbias});
  out.push_back({"gen.dense.weight", &gen_dense_.weight, &gen_dense_.dweight});
  out.push_back({"gen.dense.bias", &gen_dense_.bias, &gen_dense_.dbias});
  out.push_back({"gen.ln.gain", &gen_ln_.gain, &gen_ln_.dgain});
  out.push_back({"gen.ln.bias", &gen_ln_.bias, &gen_ln_.dbias});
  out.push_back({"gen.bias", &gen_bias_, &dgen_bias_});
  return out;
}

void GapTagger::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
  auto params = const_cast<GapTagger*>(this)->parameters();

  const EncoderConfig& cfg = encoder_.config();
  json header;
  header["config"] = {{"vocab_size", cfg.vocab_size},
                      {"hidden_dim", cfg.hidden_dim},
                      {"num_layers", cfg.num_layers},
                      {"num_heads", cfg.num_heads},
                      {"max_sequence", cfg.max_sequence},
                      {"pretrained_ref", cfg.pretrained_ref}};
  header["vocab"] = vocab_.pieces();
  json tensors = json::array();
  for (const ParamRef& p : params)
    tensors.push_back({{"name", p.name},
                       {"rows", p.value->rows()},
                       {"cols", p.value->cols()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t length = text.size();
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ParamRef& p : params) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        rowmajor = *p.value;
    out.write(reinterpret_cast<const char*>(rowmajor.data()),
              static_cast<std::streamsize>(sizeof(double) * rowmajor.size()));
  }
  if (!out) throw ParseError("failed writing checkpoint: " + path);
}

GapTagger GapTagger::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version in " + path);
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || length == 0 || length > (1ull << 30))
    throw ParseError("corrupt checkpoint header in " + path);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ParseError("truncated checkpoint header in " + path);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("invalid checkpoint header in " + path + ": " + e.what());
  }
  EncoderConfig cfg;
  try {
    const json& jc = header.at("config");
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.hidden_dim = jc.at("hidden_dim").get<int>();
    cfg.num_layers = jc.at("num_layers").get<int>();
    cfg.num_heads = jc.at("num_heads").get<int>();
    cfg.max_sequence = jc.at("max_sequence").get<int>();
    cfg.pretrained_ref = jc.value("pretrained_ref", std::string());
    GapTagger model(cfg, Vocab::from_pieces(
                             header.at("vocab").get<std::vector<std::string>>()),
                    0);
    auto params = model.parameters();
    std::map<std::string, ParamRef*> by_name;
    for (ParamRef& p : params) by_name[p.name] = &p;

    const json& tensors = header.at("tensors");
    if (tensors.size() != params.size())
      throw ParseError("checkpoint " + path + " holds " +
                       std::to_string(tensors.size()) + " tensors, expected " +
                       std::to_string(params.size()));
    for (const json& t : tensors) {
      const std::string name = t.at("name").get<std::string>();
      const long rows = t.at("rows").get<long>();
      const long cols = t.at("cols").get<long>();
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw ParseError("checkpoint " + path + " has unknown tensor " + name);
      ParamRef& p = *it->second;
      if (p.value->rows() != rows || p.value->cols() != cols)
        throw ParseError("checkpoint " + path + " tensor " + name +
                         " has shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", expected " +
                         std::to_string(p.value->rows()) + "x" +
                         std::to_string(p.value->cols()));
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
          rowmajor(rows, cols);
      in.read(reinterpret_cast<char*>(rowmajor.data()),
              static_cast<std::streamsize>(sizeof(double) * rowmajor.size()));
      if (!in) throw ParseError("truncated checkpoint tensors in " + path);
      *p.value = rowmajor;
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError("invalid checkpoint header in " + path + ": " + e.what());
  }
}

std::vector<EpochStats> train_model(GapTagger& model, const std::vector<ClozeTask>& tasks,
                                    const TrainingConfig& config, std::ostream* log) {
  config.validate();
  if (tasks.empty()) throw ValidationError("training: no tasks given");
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), size_t{0});

  std::vector<EpochStats> stats;
  stats.reserve(static_cast<size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng() % (i + 1)]);

    EpochStats es;
    size_t done = 0;
    while (done < order.size()) {
      const size_t batch =
          std::min(static_cast<size_t>(config.batch_size), order.size() - done);
      model.zero_grads();
      for (size_t j = 0; j < batch; ++j) {
        const LossBreakdown b =
            model.accumulate_gradients(tasks[order[done + j]], config);
        es.mean_loss += b.total;
        es.mean_classification += b.classification;
        es.mean_generation += b.generation;
      }
      if (batch > 1) {
        const double inv = 1.0 / static_cast<double>(batch);
        for (ParamRef& p : model.parameters()) *p.grad *= inv;
      }
      model.apply_gradients(config.learning_rate);
      done += batch;
    }
    const double inv_n = 1.0 / static_cast<double>(tasks.size());
    es.mean_loss *= inv_n;
    es.mean_classification *= inv_n;
    es.mean_generation *= inv_n;
    stats.push_back(es);
    if (log)
      *log << "epoch " << (epoch + 1) << "/" << config.epochs << " loss "
           << es.mean_loss << " (classify " << es.mean_classification
           << ", generate " << es.mean_generation << ")\n";
  }
  return stats;
}

}  // namespace cloze
