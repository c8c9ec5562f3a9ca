#include "sequst/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sequst/numerics.hpp"

namespace sequst {

AdamW::AdamW(SequenceLabeler& model, const TrainingConfig& config, std::size_t total_steps)
    : model_(&model),
      peak_lr_(config.learning_rate),
      weight_decay_(config.weight_decay),
      clip_(config.grad_clip),
      total_steps_(std::max<std::size_t>(total_steps, 1)),
      warmup_steps_(static_cast<std::size_t>(std::ceil(config.warmup_rate * static_cast<double>(total_steps)))) {
  for (const auto& p : model.parameters()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

double AdamW::learning_rate_at(std::size_t step) const {
  if (step < warmup_steps_) return peak_lr_ * static_cast<double>(step + 1) / static_cast<double>(warmup_steps_);
  if (total_steps_ <= warmup_steps_) return peak_lr_;
  const double left = static_cast<double>(total_steps_ - std::min(step, total_steps_));
  return peak_lr_ * left / static_cast<double>(total_steps_ - warmup_steps_);
}

void AdamW::step(double grad_scale) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  auto& params = model_->parameters();
  double norm_sq = 0.0;
  for (auto& p : params) {
    p.value.ensure_grad();
    for (double& g : p.value.grad()) {
      g *= grad_scale;
      norm_sq += g * g;
    }
  }
  if (!std::isfinite(norm_sq)) throw NumericError("optimizer: non-finite gradient");
  const double norm = std::sqrt(norm_sq);
  const double clip_scale = clip_ > 0.0 && norm > clip_ ? clip_ / norm : 1.0;

  const double lr = learning_rate_at(step_);
  ++step_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].value.values();
    auto grads = params[k].value.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i] * clip_scale;
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps) + weight_decay_ * values[i];
      values[i] -= lr * update;
    }
  }
  model_->zero_grad();
}

double corpus_f1(const SequenceLabeler& model, const std::vector<Sentence>& sentences) {
  std::vector<TagSequence> gold, pred;
  for (const auto& s : sentences) {
    if (!s.gold_tags) throw DataError("corpus_f1: sentence without gold tags");
    gold.push_back(*s.gold_tags);
    pred.push_back(predict_tags(model, s));
  }
  return evaluate_tags(gold, pred, model.scheme().num_classes()).f1;
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return mix_seed(seed, static_cast<std::uint64_t>(stream), index);
}

std::vector<Tensor> snapshot(const SequenceLabeler& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.parameters()) {
    Tensor t(p.value.shape(), std::vector<double>(p.value.values().begin(), p.value.values().end()));
    out.push_back(std::move(t));
  }
  return out;
}

void restore(SequenceLabeler& model, const std::vector<Tensor>& saved) {
  auto& params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto dst = params[k].value.values();
    auto src = saved[k].values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  model.zero_grad();
}

// Runs `epochs` passes of shuffled mini-batches. `loss_fn(vars, index,
// epoch_seed)` builds one item's loss; `after_epoch(epoch)` runs after each.
template <typename LossFn, typename AfterEpoch>
std::vector<double> fit(SequenceLabeler& model, std::size_t count, const TrainingConfig& config, int epochs,
                        std::uint64_t seed, LossFn&& loss_fn, AfterEpoch&& after_epoch) {
  std::vector<double> curve;
  if (epochs <= 0 || count == 0) return curve;
  const std::size_t batch = config.batch_size;
  const std::size_t per_epoch = (count + batch - 1) / batch;
  AdamW optimizer(model, config, per_epoch * static_cast<std::size_t>(epochs));
  std::vector<std::size_t> order(count);
  model.zero_grad();
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = std::mt19937_64(stream_seed(seed, Stream::kData, static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);
    const std::uint64_t epoch_seed = stream_seed(seed, Stream::kDropout, static_cast<std::uint64_t>(epoch));
    double total = 0.0;
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t end = std::min(count, start + batch);
      for (std::size_t b = start; b < end; ++b) {
        Tape tape(true);
        const ModelVars vars = bind(tape, model);
        Var loss = loss_fn(vars, order[b], epoch_seed);
        const double v = loss.item();
        if (!std::isfinite(v)) {
          throw NumericError(fmt::format("training: non-finite loss at epoch {} on item {}", epoch, order[b]));
        }
        total += v;
        tape.backward(loss);
      }
      optimizer.step(1.0 / static_cast<double>(end - start));
    }
    curve.push_back(total / static_cast<double>(count));
    after_epoch(epoch);
  }
  return curve;
}

}  // namespace

TrainReport train_supervised(SequenceLabeler& model, const std::vector<Sentence>& labeled,
                             const std::vector<Sentence>& validation, const TrainingConfig& config, int epochs,
                             std::uint64_t seed) {
  if (labeled.empty()) throw DataError("train_supervised: empty labeled set");
  for (const auto& s : labeled) {
    if (!s.gold_tags) throw DataError("train_supervised: labeled sentence without gold tags");
  }
  std::vector<std::vector<std::size_t>> ids;
  ids.reserve(labeled.size());
  for (const auto& s : labeled) ids.push_back(model.vocab().ids(s));

  TrainReport report;
  const bool has_validation = !validation.empty();
  std::vector<Tensor> best = snapshot(model);
  report.best_val_f1 = has_validation ? corpus_f1(model, validation) : 0.0;
  report.val_curve.push_back(report.best_val_f1);

  auto loss_fn = [&](const ModelVars& vars, std::size_t i, std::uint64_t epoch_seed) {
    const EncoderOutput enc = run_encoder(vars, model, ids[i], true, mix_seed(epoch_seed, i));
    return supervised_nll(vars, model, enc, *labeled[i].gold_tags);
  };
  auto after_epoch = [&](int epoch) {
    if (!has_validation) {
      report.best_epoch = epoch;
      return;
    }
    const double f1 = corpus_f1(model, validation);
    report.val_curve.push_back(f1);
    if (f1 > report.best_val_f1) {
      report.best_val_f1 = f1;
      report.best_epoch = epoch;
      best = snapshot(model);
    }
  };
  report.loss_curve = fit(model, labeled.size(), config, epochs, seed, loss_fn, after_epoch);
  if (has_validation) restore(model, best);
  spdlog::debug("supervised: best epoch {} of {}, validation F1 {:.4f}", report.best_epoch, epochs,
                report.best_val_f1);
  return report;
}

std::vector<SelectionReport> annotate_unlabeled(const SequenceLabeler& teacher, const std::vector<Sentence>& unlabeled,
                                                const TrainingConfig& config, std::uint64_t seed) {
  std::vector<SelectionReport> out;
  out.reserve(unlabeled.size());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const Sentence& s = unlabeled[i];
    const std::uint64_t select_seed = stream_seed(seed, Stream::kSelection, i);
    if (config.mode == TrainMode::kSst) {
      const EncodedSentence enc = encode(teacher, s, false, 0);
      Tensor probs({1, s.length(), teacher.num_tags()},
                   std::vector<double>(enc.distributions.values().begin(), enc.distributions.values().end()));
      const McPredictions single(std::move(probs), {});
      out.push_back(build_selection(single, 1.0, select_seed, config.selection_mode, ScoreStrategy::kNone));
    } else {
      const McPredictions mc = mc_predict(teacher, s, config.t_passes, stream_seed(seed, Stream::kDropout, i));
      out.push_back(build_selection(mc, config.rho, select_seed, config.selection_mode, ScoreStrategy::kBoth));
    }
  }
  return out;
}

StudentRound student_round(const SequenceLabeler& base, const SequenceLabeler& teacher,
                           const std::vector<Sentence>& unlabeled, const std::vector<Sentence>& labeled,
                           const TrainingConfig& config, std::uint64_t seed) {
  if (unlabeled.empty()) throw DataError("student_round: empty unlabeled set");
  RobustLossConfig loss = config.loss;
  if (config.mode == TrainMode::kSst) {
    loss.loss_kind = LossKind::kCrossEntropy;
    loss.lambda = 0.0;
  }
  loss.validate();

  StudentRound round{base, {}, annotate_unlabeled(teacher, unlabeled, config, seed)};
  RoundStats& stats = round.stats;
  double bald_sum = 0.0, conf_sum = 0.0;
  std::vector<PseudoLabeledSentence> items;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const SelectionReport& rep = round.selections[i];
    for (const auto& t : rep.tokens) {
      bald_sum += t.bald;
      conf_sum += t.confidence;
    }
    stats.tokens_total += rep.tokens.size();
    stats.tokens_selected += rep.selected_count;
    if (rep.selected_count == 0) {
      ++stats.skipped_sentences;
      continue;
    }
    items.push_back({i, &unlabeled[i], rep.pseudo_tags(), rep.mask()});
  }
  if (items.empty()) {
    throw std::runtime_error(
        fmt::format("student_round: teacher selected no tokens in any of {} unlabeled sentences", unlabeled.size()));
  }
  if (stats.tokens_total > 0) {
    stats.mean_bald = bald_sum / static_cast<double>(stats.tokens_total);
    stats.mean_confidence = conf_sum / static_cast<double>(stats.tokens_total);
  }
  if (config.student_uses_labeled) {
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      const Sentence& s = labeled[k];
      if (!s.gold_tags || s.length() == 0) continue;
      items.push_back({unlabeled.size() + k, &s, *s.gold_tags, std::vector<char>(s.length(), 1)});
    }
  }

  SequenceLabeler& student = round.student;
  auto loss_fn = [&](const ModelVars& vars, std::size_t i, std::uint64_t epoch_seed) {
    return sentence_objective(vars, student, items[i], loss, epoch_seed, true);
  };
  stats.loss_curve = fit(student, items.size(), config, config.student_epochs,
                         stream_seed(seed, Stream::kData, 0), loss_fn, [](int) {});
  return round;
}

std::string IterationRecord::to_json() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["teacher_val_f1"] = teacher_val_f1;
  j["student_val_f1"] = student_val_f1;
  j["refined_val_f1"] = refined_val_f1;
  j["mean_bald"] = mean_bald;
  j["mean_confidence"] = mean_confidence;
  j["tokens_selected"] = tokens_selected;
  j["tokens_total"] = tokens_total;
  j["skipped_sentences"] = skipped_sentences;
  j["student_loss"] = student_loss;
  j["checkpoint"] = checkpoint;
  return j.dump();
}

SequenceLabeler initial_model(const CorpusSplit& split, const LabelScheme& scheme, const TrainingConfig& config) {
  Vocabulary vocab = Vocabulary::build({&split.labeled(), &split.validation(), &split.unlabeled()});
  return SequenceLabeler(config.model_config(), std::move(vocab), scheme, config.seed);
}

namespace {

void write_selections(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                      const std::vector<SelectionReport>& selections, const LabelScheme& scheme) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < selections.size(); ++i) {
    write_selection_records(out, i, sentences[i], selections[i], scheme);
  }
}

}  // namespace

SelfTrainResult self_train(const SequenceLabeler& base, const CorpusSplit& split, const TrainingConfig& config,
                           const std::optional<std::filesystem::path>& run_dir) {
  for (const auto& w : config.validate()) spdlog::warn("config: {}", w);
  std::ofstream records_out;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    std::ofstream(*run_dir / "config.txt") << config.to_text();
    records_out.open(*run_dir / "records.jsonl");
    if (!records_out) throw std::runtime_error("cannot write " + (*run_dir / "records.jsonl").string());
  }

  SequenceLabeler teacher = base;
  TrainReport initial =
      train_supervised(teacher, split.labeled(), split.validation(), config, config.teacher_epochs, config.seed);
  if (run_dir) save_checkpoint(*run_dir / "teacher_0.json", teacher);
  spdlog::info("teacher fine-tuned: validation F1 {:.4f}", initial.best_val_f1);

  SelfTrainResult result{teacher, initial.best_val_f1, initial, {}};
  if (config.mode == TrainMode::kSupervisedOnly) return result;

  double teacher_f1 = initial.best_val_f1;
  int stalled = 0;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const auto iter = static_cast<std::uint64_t>(it);
    StudentRound round = student_round(base, teacher, split.unlabeled(), split.labeled(), config,
                                       mix_seed(config.seed, iter, 1));
    IterationRecord rec;
    rec.iteration = it;
    rec.teacher_val_f1 = teacher_f1;
    rec.student_val_f1 = split.validation().empty() ? 0.0 : corpus_f1(round.student, split.validation());
    rec.mean_bald = round.stats.mean_bald;
    rec.mean_confidence = round.stats.mean_confidence;
    rec.tokens_selected = round.stats.tokens_selected;
    rec.tokens_total = round.stats.tokens_total;
    rec.skipped_sentences = round.stats.skipped_sentences;
    rec.student_loss = round.stats.loss_curve;

    teacher = std::move(round.student);
    const TrainReport refined = train_supervised(teacher, split.labeled(), split.validation(), config,
                                                 config.teacher_epochs, mix_seed(config.seed, iter, 0));
    rec.refined_val_f1 = refined.best_val_f1;
    teacher_f1 = refined.best_val_f1;
    rec.checkpoint = fmt::format("iteration_{}.json", it);
    if (run_dir) {
      save_checkpoint(*run_dir / rec.checkpoint, teacher);
      write_selections(*run_dir / fmt::format("selection_{}.jsonl", it), split.unlabeled(), round.selections,
                       teacher.scheme());
      records_out << rec.to_json() << '\n';
      records_out.flush();
    }
    spdlog::info("iteration {}: student F1 {:.4f}, teacher F1 {:.4f}, selected {}/{} tokens, mean BALD {:.4f}", it,
                 rec.student_val_f1, rec.refined_val_f1, rec.tokens_selected, rec.tokens_total, rec.mean_bald);
    result.records.push_back(std::move(rec));

    if (teacher_f1 > result.best_val_f1) {
      result.best_val_f1 = teacher_f1;
      result.model = teacher;
      stalled = 0;
    } else if (++stalled >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace sequst
