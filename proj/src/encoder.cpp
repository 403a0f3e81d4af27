#include "cloze/encoder.hpp"

#include <cmath>

#include "cloze/nn.hpp"
#include "cloze/rng.hpp"

namespace cloze {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-12;

Mat random_matrix(long rows, long cols, std::mt19937_64& rng) {
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = kInitStd * normal01(rng);
  return m;
}

Dense make_dense(long in, long out, std::mt19937_64& rng) {
  Dense d;
  d.weight = random_matrix(in, out, rng);
  d.bias = Mat::Zero(1, out);
  d.dweight = Mat::Zero(in, out);
  d.dbias = Mat::Zero(1, out);
  return d;
}

LayerNorm make_layer_norm(long dim) {
  LayerNorm ln;
  ln.gain = Mat::Ones(1, dim);
  ln.bias = Mat::Zero(1, dim);
  ln.dgain = Mat::Zero(1, dim);
  ln.dbias = Mat::Zero(1, dim);
  return ln;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 4)
    throw ValidationError("encoder config: vocab_size must cover the specials");
  if (hidden_dim < 1 || num_layers < 1 || num_heads < 1)
    throw ValidationError("encoder config: dimensions must be positive");
  if (max_sequence < 300)
    throw ValidationError(
        "encoder config: max_sequence must be at least 300 so a full-length "
        "passage fits after subword expansion");
  if (hidden_dim % num_heads != 0)
    throw ValidationError("encoder config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
}

Mat Dense::forward(const Mat& x) const {
  return (x * weight).rowwise() + bias.row(0);
}

Mat Dense::backward(const Mat& x_in, const Mat& dy) {
  dweight += x_in.transpose() * dy;
  dbias.row(0) += dy.colwise().sum();
  return dy * weight.transpose();
}

Mat LayerNorm::forward(const Mat& x, Tape* tape) const {
  const long dim = x.cols();
  Eigen::VectorXd mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().mean();
  Eigen::VectorXd inv_sigma = (var.array() + kLayerNormEps).sqrt().inverse();
  Mat normalized = centered.array().colwise() * inv_sigma.array();
  Mat out = (normalized.array().rowwise() * gain.row(0).array()).matrix();
  out.rowwise() += bias.row(0);
  if (tape) {
    tape->normalized = normalized;
    tape->inv_sigma = std::move(inv_sigma);
  }
  (void)dim;
  return out;
}

Mat LayerNorm::backward(const Tape& tape, const Mat& dy) {
  dbias.row(0) += dy.colwise().sum();
  dgain.row(0) += (dy.array() * tape.normalized.array()).colwise().sum().matrix();

  Mat dnorm = (dy.array().rowwise() * gain.row(0).array()).matrix();
  Eigen::VectorXd mean_dnorm = dnorm.rowwise().mean();
  Eigen::VectorXd mean_dnorm_norm =
      (dnorm.array() * tape.normalized.array()).rowwise().mean();
  Mat dx = dnorm;
  dx.colwise() -= mean_dnorm;
  dx -= (tape.normalized.array().colwise() * mean_dnorm_norm.array()).matrix();
  return (dx.array().colwise() * tape.inv_sigma.array()).matrix();
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& config,
                                       std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const int h = config_.hidden_dim;
  tok_emb_ = random_matrix(config_.vocab_size, h, rng);
  pos_emb_ = random_matrix(config_.max_sequence, h, rng);
  dtok_emb_ = Mat::Zero(config_.vocab_size, h);
  dpos_emb_ = Mat::Zero(config_.max_sequence, h);
  emb_ln_ = make_layer_norm(h);
  for (int l = 0; l < config_.num_layers; ++l) {
    Block b;
    b.wq = make_dense(h, h, rng);
    b.wk = make_dense(h, h, rng);
    b.wv = make_dense(h, h, rng);
    b.wo = make_dense(h, h, rng);
    b.ln1 = make_layer_norm(h);
    b.ffn_in = make_dense(h, config_.ffn_dim(), rng);
    b.ffn_out = make_dense(config_.ffn_dim(), h, rng);
    b.ln2 = make_layer_norm(h);
    blocks_.push_back(std::move(b));
  }
}

Mat TransformerEncoder::attention(const Block& block, const Mat& x,
                                  BlockTape* tape) const {
  const long t = x.rows();
  const int heads = config_.num_heads;
  const int hd = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat q = block.wq.forward(x);
  Mat k = block.wk.forward(x);
  Mat v = block.wv.forward(x);

  Mat context(t, config_.hidden_dim);
  std::vector<Mat> probs(heads);
  for (int a = 0; a < heads; ++a) {
    const auto qa = q.middleCols(a * hd, hd);
    const auto ka = k.middleCols(a * hd, hd);
    const auto va = v.middleCols(a * hd, hd);
    probs[a] = softmax_rows((qa * ka.transpose()) * scale);
    context.middleCols(a * hd, hd) = probs[a] * va;
  }
  if (tape) {
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->attn_probs = std::move(probs);
    tape->context = context;
  }
  return block.wo.forward(context);
}

Mat TransformerEncoder::forward(const std::vector<int>& ids, EncoderTape* tape) const {
  const long t = static_cast<long>(ids.size());
  if (t == 0) throw ValidationError("encoder: empty sequence");
  if (t > config_.max_sequence)
    throw ValidationError("encoder: sequence of " + std::to_string(t) +
                          " pieces exceeds max_sequence " +
                          std::to_string(config_.max_sequence));
  Mat x(t, config_.hidden_dim);
  for (long i = 0; i < t; ++i) {
    const int id = ids[i];
    if (id < 0 || id >= config_.vocab_size)
      throw ValidationError("encoder: piece id " + std::to_string(id) +
                            " outside vocabulary");
    x.row(i) = tok_emb_.row(id) + pos_emb_.row(i);
  }
  if (tape) tape->ids = ids;
  x = emb_ln_.forward(x, tape ? &tape->emb_ln : nullptr);

  if (tape) tape->blocks.resize(blocks_.size());
  for (size_t l = 0; l < blocks_.size(); ++l) {
    const Block& block = blocks_[l];
    BlockTape* bt = tape ? &tape->blocks[l] : nullptr;
    if (bt) bt->input = x;

    Mat attn_out = attention(block, x, bt);
    Mat post_attn =
        block.ln1.forward(x + attn_out, bt ? &bt->ln1 : nullptr);

    Mat pre = block.ffn_in.forward(post_attn);
    Mat act = gelu(pre);
    Mat ffn = block.ffn_out.forward(act);
    Mat out = block.ln2.forward(post_attn + ffn, bt ? &bt->ln2 : nullptr);

    if (bt) {
      bt->post_attn = post_attn;
      bt->ffn_pre = std::move(pre);
      bt->ffn_act = std::move(act);
    }
    x = std::move(out);
  }
  return x;
}

void TransformerEncoder::backward(const EncoderTape& tape, const Mat& d_hidden) {
  const int heads = config_.num_heads;
  const int hd = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat dx = d_hidden;
  for (long l = static_cast<long>(blocks_.size()) - 1; l >= 0; --l) {
    Block& block = blocks_[l];
    const BlockTape& bt = tape.blocks[l];

    // ln2(post_attn + ffn)
    Mat d_res2 = block.ln2.backward(bt.ln2, dx);
    Mat d_act = block.ffn_out.backward(bt.ffn_act, d_res2);
    Mat d_pre = gelu_backward(bt.ffn_pre, d_act);
    Mat d_post_attn = block.ffn_in.backward(bt.post_attn, d_pre) + d_res2;

    // ln1(input + attention)
    Mat d_res1 = block.ln1.backward(bt.ln1, d_post_attn);
    Mat d_context = block.wo.backward(bt.context, d_res1);

    Mat dq(bt.q.rows(), bt.q.cols());
    Mat dk(bt.k.rows(), bt.k.cols());
    Mat dv(bt.v.rows(), bt.v.cols());
    for (int a = 0; a < heads; ++a) {
      const auto qa = bt.q.middleCols(a * hd, hd);
      const auto ka = bt.k.middleCols(a * hd, hd);
      const auto va = bt.v.middleCols(a * hd, hd);
      const Mat& pa = bt.attn_probs[a];
      const auto d_ctx_a = d_context.middleCols(a * hd, hd);

      Mat d_probs = d_ctx_a * va.transpose();
      dv.middleCols(a * hd, hd) = pa.transpose() * d_ctx_a;
      Mat d_scores = softmax_rows_backward(pa, d_probs) * scale;
      dq.middleCols(a * hd, hd) = d_scores * ka;
      dk.middleCols(a * hd, hd) = d_scores.transpose() * qa;
    }

    Mat d_input = block.wq.backward(bt.input, dq);
    d_input += block.wk.backward(bt.input, dk);
    d_input += block.wv.backward(bt.input, dv);
    dx = d_input + d_res1;
  }

  Mat d_emb = emb_ln_.backward(tape.emb_ln, dx);
  for (long i = 0; i < d_emb.rows(); ++i) {
    dtok_emb_.row(tape.ids[i]) += d_emb.row(i);
    dpos_emb_.row(i) += d_emb.row(i);
  }
}

std::vector<ParamRef> TransformerEncoder::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"embeddings.token", &tok_emb_, &dtok_emb_});
  out.push_back({"embeddings.position", &pos_emb_, &dpos_emb_});
  out.push_back({"embeddings.ln.gain", &emb_ln_.gain, &emb_ln_.dgain});
  out.push_back({"embeddings.ln.bias", &emb_ln_.bias, &emb_ln_.dbias});
  for (size_t l = 0; l < blocks_.size(); ++l) {
    Block& b = blocks_[l];
    const std::string prefix = "block" + std::to_string(l) + ".";
    auto add_dense = [&](const std::string& name, Dense& d) {
      out.push_back({prefix + name + ".weight", &d.weight, &d.dweight});
      out.push_back({prefix + name + ".bias", &d.bias, &d.dbias});
    };
    add_dense("wq", b.wq);
    add_dense("wk", b.wk);
    add_dense("wv", b.wv);
    add_dense("wo", b.wo);
    out.push_back({prefix + "ln1.gain", &b.ln1.gain, &b.ln1.dgain});
    out.push_back({prefix + "ln1.bias", &b.ln1.bias, &b.ln1.dbias});
    add_dense("ffn_in", b.ffn_in);
    add_dense("ffn_out", b.ffn_out);
    out.push_back({prefix + "ln2.gain", &b.ln2.gain, &b.ln2.dgain});
    out.push_back({prefix + "ln2.bias", &b.ln2.bias, &b.ln2.dbias});
  }
  return out;
}

void TransformerEncoder::zero_grads() {
  for (ParamRef& p : parameters()) p.grad->setZero();
}

}  // namespace cloze
