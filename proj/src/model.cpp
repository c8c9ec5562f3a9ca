#include "sequst/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "sequst/crf.hpp"
#include "sequst/numerics.hpp"

namespace sequst {

std::string to_string(HeadKind head) { return head == HeadKind::kCrf ? "crf" : "softmax"; }

HeadKind parse_head(std::string_view name) {
  if (name == "softmax") return HeadKind::kSoftmax;
  if (name == "crf") return HeadKind::kCrf;
  throw std::invalid_argument(fmt::format("head: expected softmax or crf, got '{}'", name));
}

Vocabulary::Vocabulary() { add(kUnknownToken); }

Vocabulary Vocabulary::build(std::initializer_list<const std::vector<Sentence>*> corpora) {
  Vocabulary v;
  for (const auto* corpus : corpora) {
    for (const auto& s : *corpus)
      for (const auto& tok : s.tokens) v.add(tok);
  }
  return v;
}

void Vocabulary::add(const std::string& token) {
  if (index_.emplace(token, tokens_.size()).second) tokens_.push_back(token);
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const Sentence& sentence) const {
  std::vector<std::size_t> out;
  out.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) out.push_back(id(t));
  return out;
}

namespace {

const char* kSlotNames[SequenceLabeler::kSlotCount] = {
    "embedding",
    "lstm_fwd.wx", "lstm_fwd.wh", "lstm_fwd.bias",
    "lstm_bwd.wx", "lstm_bwd.wh", "lstm_bwd.bias",
    "head.w", "head.bias",
    "crf.transitions",
    "gauss_mu.w1", "gauss_mu.b1", "gauss_mu.w2", "gauss_mu.b2",
    "gauss_sigma.w1", "gauss_sigma.b1", "gauss_sigma.w2", "gauss_sigma.b2",
};

bool is_weight(std::size_t slot) {
  switch (slot) {
    case SequenceLabeler::kEmbedding:
    case SequenceLabeler::kFwdWx:
    case SequenceLabeler::kFwdWh:
    case SequenceLabeler::kBwdWx:
    case SequenceLabeler::kBwdWh:
    case SequenceLabeler::kHeadW:
    case SequenceLabeler::kMuW1:
    case SequenceLabeler::kMuW2:
    case SequenceLabeler::kSigmaW1:
    case SequenceLabeler::kSigmaW2:
      return true;
    default:
      return false;
  }
}

}  // namespace

SequenceLabeler::SequenceLabeler(ModelConfig config, Vocabulary vocab, LabelScheme scheme, std::uint64_t init_seed)
    : config_(config), vocab_(std::move(vocab)), scheme_(std::move(scheme)) {
  set_dropout(config_.dropout);
  if (config_.embed_dim == 0 || config_.hidden_dim == 0) throw std::invalid_argument("model: zero dimension");
  const std::size_t V = vocab_.size(), d = config_.embed_dim, h = config_.hidden_dim, w = 2 * h,
                    Y = scheme_.size();
  const std::vector<std::vector<std::size_t>> shapes = {
      {V, d},
      {d, 4 * h}, {h, 4 * h}, {1, 4 * h},
      {d, 4 * h}, {h, 4 * h}, {1, 4 * h},
      {w, Y}, {1, Y},
      {Y, Y},
      {w, w}, {1, w}, {w, w}, {1, w},
      {w, w}, {1, w}, {w, w}, {1, w},
  };
  auto rng = RandomStreams(init_seed).engine(Stream::kInit);
  params_.reserve(kSlotCount);
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    Tensor t(shapes[s]);
    if (is_weight(s)) {
      for (double& v : t.values()) v = uniform(rng, -0.1, 0.1);
    }
    params_.push_back({kSlotNames[s], std::move(t)});
  }
  // The mean head starts near the identity scaling so early perturbations
  // stay centred on the clean representation.
  for (double& v : params_[kMuB2].value.values()) v = 1.0;
}

Tensor& SequenceLabeler::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::invalid_argument(fmt::format("model: no parameter named '{}'", name));
}

void SequenceLabeler::set_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument(fmt::format("dropout rate {} not in [0, 1)", rate));
  config_.dropout = rate;
}

void SequenceLabeler::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

bool SequenceLabeler::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const Param& p) { return p.value.all_finite(); });
}

ModelVars bind(Tape& tape, SequenceLabeler& model) {
  ModelVars vars;
  vars.slot.reserve(SequenceLabeler::kSlotCount);
  for (auto& p : model.parameters()) vars.slot.push_back(tape.parameter(p.value));
  return vars;
}

ModelVars bind_readonly(Tape& tape, const SequenceLabeler& model) {
  ModelVars vars;
  vars.slot.reserve(SequenceLabeler::kSlotCount);
  for (const auto& p : model.parameters()) vars.slot.push_back(tape.reference(p.value));
  return vars;
}

namespace {

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
  Tensor mask = Tensor::matrix(rows, cols);
  std::mt19937_64 rng(seed);
  const double keep = 1.0 - rate;
  for (double& v : mask.values()) v = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace

EncoderOutput run_encoder(const ModelVars& vars, const SequenceLabeler& model,
                          std::span<const std::size_t> token_ids, bool dropout_active, std::uint64_t noise_seed) {
  using S = SequenceLabeler;
  const double rate = model.config().dropout;
  const bool masked = dropout_active && rate > 0.0;
  Var x = ag::gather_rows(vars[S::kEmbedding], token_ids);
  if (masked) x = ag::mul_const(x, dropout_mask(x.value().rows(), x.value().cols(), rate, mix_seed(noise_seed, 1)));
  Var fwd = ag::lstm(x, vars[S::kFwdWx], vars[S::kFwdWh], vars[S::kFwdBias], false);
  Var bwd = ag::lstm(x, vars[S::kBwdWx], vars[S::kBwdWh], vars[S::kBwdBias], true);
  Var h = ag::concat_cols(fwd, bwd);
  if (masked) h = ag::mul_const(h, dropout_mask(h.value().rows(), h.value().cols(), rate, mix_seed(noise_seed, 2)));
  return {h, head_emissions(vars, h)};
}

Var head_emissions(const ModelVars& vars, Var hidden) {
  using S = SequenceLabeler;
  return ag::add_row(ag::matmul(hidden, vars[S::kHeadW]), vars[S::kHeadBias]);
}

Var gaussian_mean(const ModelVars& vars, Var hidden) {
  using S = SequenceLabeler;
  Var a = ag::relu(ag::add_row(ag::matmul(hidden, vars[S::kMuW1]), vars[S::kMuB1]));
  return ag::add_row(ag::matmul(a, vars[S::kMuW2]), vars[S::kMuB2]);
}

Var gaussian_scale(const ModelVars& vars, Var hidden) {
  using S = SequenceLabeler;
  Var a = ag::relu(ag::add_row(ag::matmul(hidden, vars[S::kSigmaW1]), vars[S::kSigmaB1]));
  return ag::softplus(ag::add_row(ag::matmul(a, vars[S::kSigmaW2]), vars[S::kSigmaB2]));
}

Tensor token_distributions(const SequenceLabeler& model, const Tensor& emissions) {
  if (model.config().head == HeadKind::kCrf) {
    return crf_token_marginals(emissions, model.param(SequenceLabeler::kTransitions));
  }
  Tensor out = Tensor::matrix(emissions.rows(), emissions.cols());
  for (std::size_t j = 0; j < emissions.rows(); ++j) {
    const auto p = softmax(emissions.row(j));
    std::copy(p.begin(), p.end(), out.row(j).begin());
  }
  return out;
}

EncodedSentence encode(const SequenceLabeler& model, const Sentence& sentence, bool dropout_active,
                       std::uint64_t noise_seed) {
  Tape tape(false);
  const ModelVars vars = bind_readonly(tape, model);
  const auto ids = model.vocab().ids(sentence);
  const EncoderOutput out = run_encoder(vars, model, ids, dropout_active, noise_seed);
  EncodedSentence enc;
  enc.hidden = out.hidden.value();
  enc.emissions = out.emissions.value();
  enc.distributions = token_distributions(model, enc.emissions);
  return enc;
}

TagSequence predict_tags(const SequenceLabeler& model, const Sentence& sentence) {
  const EncodedSentence enc = encode(model, sentence, false, 0);
  if (model.config().head == HeadKind::kCrf) {
    return crf_viterbi(enc.emissions, model.param(SequenceLabeler::kTransitions)).path;
  }
  TagSequence tags(enc.emissions.rows());
  for (std::size_t j = 0; j < tags.size(); ++j) {
    auto r = enc.emissions.row(j);
    tags[j] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return tags;
}

std::vector<TagSequence> predict_all(const SequenceLabeler& model, const std::vector<Sentence>& sentences) {
  std::vector<TagSequence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(predict_tags(model, s));
  return out;
}

std::vector<double> softmax_head(const SequenceLabeler& model, std::span<const double> hidden) {
  if (hidden.size() != model.hidden_width()) throw std::invalid_argument("softmax_head: width mismatch");
  Tape tape(false);
  const ModelVars vars = bind_readonly(tape, model);
  Var h = tape.constant(Tensor({1, hidden.size()}, std::vector<double>(hidden.begin(), hidden.end())));
  const Tensor& e = head_emissions(vars, h).value();
  return softmax(e.values());
}

std::pair<std::vector<double>, std::vector<double>> gaussian_project(const SequenceLabeler& model,
                                                                     std::span<const double> hidden) {
  if (hidden.size() != model.hidden_width()) throw std::invalid_argument("gaussian_project: width mismatch");
  Tape tape(false);
  const ModelVars vars = bind_readonly(tape, model);
  Var h = tape.constant(Tensor({1, hidden.size()}, std::vector<double>(hidden.begin(), hidden.end())));
  const auto mu = gaussian_mean(vars, h).value().values();
  const auto sigma = gaussian_scale(vars, h).value().values();
  return {std::vector<double>(mu.begin(), mu.end()), std::vector<double>(sigma.begin(), sigma.end())};
}

std::string checkpoint_text(const SequenceLabeler& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = {{"embed_dim", model.config().embed_dim},
                 {"hidden_dim", model.config().hidden_dim},
                 {"dropout", model.config().dropout},
                 {"head", to_string(model.config().head)}};
  j["tags"] = model.scheme().tags();
  j["vocab"] = model.vocab().tokens();
  auto& params = j["parameters"];
  params = nlohmann::ordered_json::object();
  for (const auto& p : model.parameters()) {
    params[p.name] = {{"shape", p.value.shape()},
                      {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}};
  }
  return j.dump(1);
}

SequenceLabeler checkpoint_from_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(fmt::format("checkpoint: unsupported format version {}", version));
  }
  ModelConfig cfg;
  const auto& c = j.at("config");
  cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
  cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
  cfg.dropout = c.at("dropout").get<double>();
  cfg.head = parse_head(c.at("head").get<std::string>());
  Vocabulary vocab;
  for (const auto& tok : j.at("vocab").get<std::vector<std::string>>()) vocab.add(tok);
  SequenceLabeler model(cfg, std::move(vocab), LabelScheme::from_tags(j.at("tags").get<std::vector<std::string>>()), 0);
  const auto& params = j.at("parameters");
  for (auto& p : model.parameters()) {
    const auto& entry = params.at(p.name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != p.value.shape()) throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.value = Tensor(shape, entry.at("values").get<std::vector<double>>());
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const SequenceLabeler& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << checkpoint_text(model) << '\n';
}

SequenceLabeler load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_text(ss.str());
}

}  // namespace sequst
