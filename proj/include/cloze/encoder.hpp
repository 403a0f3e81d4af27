#ifndef CLOZE_ENCODER_HPP_
#define CLOZE_ENCODER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cloze/types.hpp"

namespace cloze {

using Mat = Eigen::MatrixXd;

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 128;
  int num_layers = 2;
  int num_heads = 4;
  int max_sequence = 512;
  std::string pretrained_ref;  // optional checkpoint supplying initial weights

  int head_dim() const { return hidden_dim / num_heads; }
  int ffn_dim() const { return 4 * hidden_dim; }
  void validate() const;
};

// Named view of one weight tensor and its gradient slot.
struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

// Affine map rows(x) -> rows(x) * weight + bias. Parameters only; inputs
// needed for the backward pass are supplied by the caller's tape.
struct Dense {
  Mat weight;  // in x out
  Mat bias;    // 1 x out
  Mat dweight;
  Mat dbias;

  Mat forward(const Mat& x) const;
  // Accumulates dweight/dbias and returns dL/dx.
  Mat backward(const Mat& x_in, const Mat& dy);
};

// Per-row normalization over the feature dimension with learned gain/bias.
struct LayerNorm {
  Mat gain;  // 1 x dim
  Mat bias;  // 1 x dim
  Mat dgain;
  Mat dbias;

  struct Tape {
    Mat normalized;
    Eigen::VectorXd inv_sigma;
  };

  Mat forward(const Mat& x, Tape* tape = nullptr) const;
  Mat backward(const Tape& tape, const Mat& dy);
};

struct BlockTape {
  Mat input;
  Mat q, k, v;
  std::vector<Mat> attn_probs;  // per head, T x T
  Mat context;
  LayerNorm::Tape ln1;
  Mat post_attn;  // output of ln1
  Mat ffn_pre;    // pre-activation
  Mat ffn_act;
  LayerNorm::Tape ln2;
};

struct EncoderTape {
  std::vector<int> ids;
  LayerNorm::Tape emb_ln;
  std::vector<BlockTape> blocks;
};

// Pre-trained-style transformer stack: token + position embeddings with
// layer norm, then num_layers blocks of multi-head self-attention and a GELU
// feed-forward, post-norm residuals throughout. forward() is const and safe
// to run concurrently; backward() accumulates into the gradient slots and is
// single-threaded by contract.
class TransformerEncoder {
 public:
  TransformerEncoder(const EncoderConfig& config, std::uint64_t init_seed);

  Mat forward(const std::vector<int>& ids, EncoderTape* tape = nullptr) const;
  void backward(const EncoderTape& tape, const Mat& d_hidden);

  std::vector<ParamRef> parameters();
  void zero_grads();

  const EncoderConfig& config() const { return config_; }
  Mat& token_embeddings() { return tok_emb_; }
  const Mat& token_embeddings() const { return tok_emb_; }
  Mat& token_embedding_grad() { return dtok_emb_; }

 private:
  struct Block {
    Dense wq, wk, wv, wo;
    LayerNorm ln1;
    Dense ffn_in;   // hidden -> ffn
    Dense ffn_out;  // ffn -> hidden
    LayerNorm ln2;
  };

  Mat attention(const Block& block, const Mat& x, BlockTape* tape) const;

  EncoderConfig config_;
  Mat tok_emb_;  // vocab x hidden
  Mat pos_emb_;  // max_sequence x hidden
  Mat dtok_emb_;
  Mat dpos_emb_;
  LayerNorm emb_ln_;
  std::vector<Block> blocks_;
};

}  // namespace cloze

#endif  // CLOZE_ENCODER_HPP_
