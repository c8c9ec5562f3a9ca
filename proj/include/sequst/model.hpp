#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sequst/autograd.hpp"
#include "sequst/data.hpp"
#include "sequst/tensor.hpp"

namespace sequst {

enum class HeadKind { kSoftmax, kCrf };

std::string to_string(HeadKind head);
HeadKind parse_head(std::string_view name);

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;  // per direction; token representations are 2× this wide
  double dropout = 0.1;
  HeadKind head = HeadKind::kSoftmax;
};

/// Token → row of the embedding table. Row 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr const char* kUnknownToken = "<unk>";

  Vocabulary();
  static Vocabulary build(std::initializer_list<const std::vector<Sentence>*> corpora);

  void add(const std::string& token);
  std::size_t id(std::string_view token) const;
  std::vector<std::size_t> ids(const Sentence& sentence) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Embedding + BiLSTM encoder with a softmax or CRF prediction head and the
/// two Gaussian projection heads used by consistency regularization.
///
/// Every parameter lives in one ordered list so optimizers and checkpoints can
/// walk it by name. The CRF transition matrix is present for both heads but
/// only read by the CRF head.
class SequenceLabeler {
 public:
  enum Slot : std::size_t {
    kEmbedding,
    kFwdWx, kFwdWh, kFwdBias,
    kBwdWx, kBwdWh, kBwdBias,
    kHeadW, kHeadBias,
    kTransitions,
    kMuW1, kMuB1, kMuW2, kMuB2,
    kSigmaW1, kSigmaB1, kSigmaW2, kSigmaB2,
    kSlotCount
  };

  struct Param {
    std::string name;
    Tensor value;
  };

  SequenceLabeler(ModelConfig config, Vocabulary vocab, LabelScheme scheme, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LabelScheme& scheme() const { return scheme_; }
  std::size_t num_tags() const { return scheme_.size(); }
  std::size_t hidden_width() const { return 2 * config_.hidden_dim; }

  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  Tensor& param(Slot slot) { return params_[slot].value; }
  const Tensor& param(Slot slot) const { return params_[slot].value; }
  Tensor& param(std::string_view name);

  void set_dropout(double rate);
  void zero_grad();
  bool all_finite() const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  LabelScheme scheme_;
  std::vector<Param> params_;
};

/// Parameters of one model bound as tape leaves.
struct ModelVars {
  std::vector<Var> slot;
  Var operator[](SequenceLabeler::Slot s) const { return slot[s]; }
};

ModelVars bind(Tape& tape, SequenceLabeler& model);
ModelVars bind_readonly(Tape& tape, const SequenceLabeler& model);

struct EncoderOutput {
  Var hidden;     // L×2h
  Var emissions;  // L×|Y|
};

/// One stochastic (or deterministic) pass of the encoder. With
/// `dropout_active`, embedding outputs and encoder outputs each get an
/// inverted-dropout mask drawn from `noise_seed`; otherwise no mask is applied.
EncoderOutput run_encoder(const ModelVars& vars, const SequenceLabeler& model,
                          std::span<const std::size_t> token_ids, bool dropout_active, std::uint64_t noise_seed);

Var head_emissions(const ModelVars& vars, Var hidden);
Var gaussian_mean(const ModelVars& vars, Var hidden);
Var gaussian_scale(const ModelVars& vars, Var hidden);

/// Per-token distributions: softmax rows or CRF marginals.
Tensor token_distributions(const SequenceLabeler& model, const Tensor& emissions);

struct EncodedSentence {
  Tensor hidden;         // L×2h
  Tensor emissions;      // L×|Y|
  Tensor distributions;  // L×|Y|, rows on the simplex
};

EncodedSentence encode(const SequenceLabeler& model, const Sentence& sentence, bool dropout_active,
                       std::uint64_t noise_seed);

/// Deterministic decoding: per-token argmax (softmax) or Viterbi (CRF).
TagSequence predict_tags(const SequenceLabeler& model, const Sentence& sentence);
std::vector<TagSequence> predict_all(const SequenceLabeler& model, const std::vector<Sentence>& sentences);

std::vector<double> softmax_head(const SequenceLabeler& model, std::span<const double> hidden);
std::pair<std::vector<double>, std::vector<double>> gaussian_project(const SequenceLabeler& model,
                                                                     std::span<const double> hidden);

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const SequenceLabeler& model);
SequenceLabeler load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const SequenceLabeler& model);
SequenceLabeler checkpoint_from_text(std::string_view text);

}  // namespace sequst
