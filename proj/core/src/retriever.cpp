#include "docs2synth/retriever.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "docs2synth/errors.hpp"
#include "docs2synth/parallel.hpp"

namespace docs2synth::retriever {

using nlohmann::json;

std::size_t ScoringModel::expected_weight_count() const noexcept {
  if (feature_config.hidden_units <= 0) return kPairDim;
  auto h = static_cast<std::size_t>(feature_config.hidden_units);
  return h * kPairDim + h;
}

void ScoringModel::check() const {
  if (weights.size() != expected_weight_count()) {
    throw ModelError("model has " + std::to_string(weights.size()) + " weights, feature config needs " +
                     std::to_string(expected_weight_count()));
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i])) throw ModelError("weight " + std::to_string(i) + " is not finite");
  }
}

ScoringModel ScoringModel::linear(FeatureConfig config) {
  config.hidden_units = 0;
  ScoringModel m;
  m.feature_config = config;
  m.weights.assign(kPairDim, 0.0);
  return m;
}

ScoringModel ScoringModel::mlp(FeatureConfig config, std::uint64_t seed) {
  if (config.hidden_units <= 0) throw ModelError("mlp scorer needs hidden_units > 0");
  ScoringModel m;
  m.feature_config = config;
  m.weights.resize(m.expected_weight_count());
  std::mt19937_64 rng(seed);
  auto uniform = [&](double limit) {
    double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return (2.0 * unit - 1.0) * limit;
  };
  auto h = static_cast<std::size_t>(config.hidden_units);
  double l1 = std::sqrt(6.0 / static_cast<double>(kPairDim + h));
  double l2 = std::sqrt(6.0 / static_cast<double>(h + 1));
  for (std::size_t i = 0; i < h * kPairDim; ++i) m.weights[i] = uniform(l1);
  for (std::size_t i = h * kPairDim; i < m.weights.size(); ++i) m.weights[i] = uniform(l2);
  return m;
}

namespace {

double dot(const double* w, const PairFeatures& phi) {
  double s = 0;
  for (std::size_t k = 0; k < kPairDim; ++k) s += w[k] * phi[k];
  return s;
}

}  // namespace

double score(const ScoringModel& model, const PairFeatures& phi) {
  if (model.weights.size() != model.expected_weight_count()) {
    throw ModelError("weight count does not match feature config");
  }
  if (model.feature_config.hidden_units <= 0) return dot(model.weights.data(), phi);
  auto h = static_cast<std::size_t>(model.feature_config.hidden_units);
  const double* w2 = model.weights.data() + h * kPairDim;
  double out = 0;
  for (std::size_t j = 0; j < h; ++j) out += w2[j] * std::tanh(dot(model.weights.data() + j * kPairDim, phi));
  return out;
}

double score_entity(const ScoringModel& model, const Query& query, const FeatureBundle& bundle,
                    std::string_view content) {
  auto d = static_cast<std::size_t>(model.feature_config.text_dim);
  if (query.q_vec.size() != d || query.a_vec.size() != d || bundle.text_vec.size() != d) {
    throw ModelError("embedding dimension does not match model text_dim " + std::to_string(d));
  }
  return score(model, pair_features(query, bundle, content));
}

std::vector<double> predict(const ScoringModel& model, const Query& query, const ParsedDocument& doc,
                            const std::vector<FeatureBundle>& bundles) {
  if (bundles.size() != doc.entities.size()) throw ModelError("feature bundle count does not match entities");
  std::vector<double> logits;
  logits.reserve(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    logits.push_back(score_entity(model, query, bundles[i], doc.entities[i].content));
  }
  return logits;
}

std::vector<double> predict(const ScoringModel& model, const std::string& question, const std::string& answer,
                            const ParsedDocument& doc) {
  if (doc.entities.empty()) throw EmptyDocument("document " + doc.doc_id + " has no entities");
  auto query = Query::make(question, answer, model.feature_config);
  return predict(model, query, doc, extract_features(doc, model.feature_config));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

double cross_entropy(std::span<const double> logits, std::size_t gold) {
  if (gold >= logits.size()) throw ModelError("gold index out of range");
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double z : logits) sum += std::exp(z - mx);
  return std::log(sum) + mx - logits[gold];
}

double loss_and_gradient(const ScoringModel& model, std::span<const PairFeatures> phis, std::size_t gold,
                         std::span<double> grad) {
  if (grad.size() != model.weights.size()) throw ModelError("gradient buffer has wrong size");
  if (phis.empty()) throw ModelError("no candidates");
  const std::size_t n = phis.size();
  const bool linear = model.feature_config.hidden_units <= 0;
  const auto h = linear ? 0 : static_cast<std::size_t>(model.feature_config.hidden_units);

  std::vector<double> logits(n);
  std::vector<double> hidden(n * h);
  for (std::size_t i = 0; i < n; ++i) {
    if (linear) {
      logits[i] = dot(model.weights.data(), phis[i]);
      continue;
    }
    const double* w2 = model.weights.data() + h * kPairDim;
    double z = 0;
    for (std::size_t j = 0; j < h; ++j) {
      double a = std::tanh(dot(model.weights.data() + j * kPairDim, phis[i]));
      hidden[i * h + j] = a;
      z += w2[j] * a;
    }
    logits[i] = z;
  }

  double loss = cross_entropy(logits, gold);
  auto p = softmax(logits);
  for (std::size_t i = 0; i < n; ++i) {
    double d = p[i] - (i == gold ? 1.0 : 0.0);
    if (linear) {
      for (std::size_t k = 0; k < kPairDim; ++k) grad[k] += d * phis[i][k];
      continue;
    }
    const double* w2 = model.weights.data() + h * kPairDim;
    for (std::size_t j = 0; j < h; ++j) {
      double a = hidden[i * h + j];
      grad[h * kPairDim + j] += d * a;
      double back = d * w2[j] * (1.0 - a * a);
      for (std::size_t k = 0; k < kPairDim; ++k) grad[j * kPairDim + k] += back * phis[i][k];
    }
  }
  return loss;
}

std::vector<int> top_k(std::span<const double> logits, int k) {
  if (k < 1) throw ModelError("k must be at least 1");
  std::vector<int> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto kk = std::min(static_cast<std::size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(), [&](int a, int b) {
    auto la = logits[static_cast<std::size_t>(a)];
    auto lb = logits[static_cast<std::size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  });
  idx.resize(kk);
  return idx;
}

void adamw_step(std::span<double> weights, std::span<const double> grad, AdamWState& state,
                const AdamWParams& params) {
  if (grad.size() != weights.size()) throw ModelError("gradient size does not match weights");
  if (state.m.size() != weights.size()) state.m.assign(weights.size(), 0.0);
  if (state.v.size() != weights.size()) state.v.assign(weights.size(), 0.0);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(params.beta1, t);
  const double bc2 = 1.0 - std::pow(params.beta2, t);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] -= params.learning_rate * params.weight_decay * weights[i];
    state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * grad[i];
    state.v[i] = params.beta2 * state.v[i] + (1.0 - params.beta2) * grad[i] * grad[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    weights[i] -= params.learning_rate * m_hat / (std::sqrt(v_hat) + params.epsilon);
  }
}

void to_json(json& j, const TrainingSample& s) {
  j = json{{"qa_id", s.qa_id},
           {"question", s.question},
           {"initial_answer", s.initial_answer},
           {"doc_id", s.doc_id},
           {"gold_index", s.gold_index}};
}

void from_json(const json& j, TrainingSample& s) {
  s.qa_id = j.value("qa_id", "");
  s.question = j.at("question").get<std::string>();
  s.initial_answer = j.value("initial_answer", "");
  s.doc_id = j.at("doc_id").get<std::string>();
  s.gold_index = j.at("gold_index").get<int>();
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigValidationError("training.batch_size", "must be >= 1");
  if (epochs < 1) throw ConfigValidationError("training.epochs", "must be >= 1");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigValidationError("training.val_fraction", "must be in (0,1)");
  if (!(optimizer.learning_rate > 0)) throw ConfigValidationError("training.learning_rate", "must be > 0");
  if (top_k < 1) throw ConfigValidationError("training.top_k", "must be >= 1");
  if (features.text_dim < 1) throw ConfigValidationError("training.text_dim", "must be >= 1");
  if (features.hidden_units < 0) throw ConfigValidationError("training.hidden_units", "must be >= 0");
}

void to_json(json& j, const EpochStats& e) {
  j = json{{"epoch", e.epoch},
           {"train_loss", e.train_loss},
           {"val_loss", e.val_loss},
           {"val_top1", e.val_top1},
           {"val_topk", e.val_topk}};
}

void to_json(json& j, const TrainReport& r) {
  j = json{{"epochs", r.epochs},
           {"best_epoch", r.best_epoch},
           {"train_samples", r.train_samples},
           {"val_samples", r.val_samples},
           {"val_doc_ids", r.val_doc_ids}};
}

std::vector<std::string> split_validation_docs(std::vector<std::string> doc_ids, double val_fraction,
                                               std::uint64_t seed) {
  std::sort(doc_ids.begin(), doc_ids.end());
  doc_ids.erase(std::unique(doc_ids.begin(), doc_ids.end()), doc_ids.end());
  if (doc_ids.size() < 2) return {};
  std::mt19937_64 rng(seed ^ 0x5A11DA7AULL);
  for (std::size_t i = doc_ids.size(); i > 1; --i) {
    std::swap(doc_ids[i - 1], doc_ids[static_cast<std::size_t>(rng() % i)]);
  }
  auto count = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(doc_ids.size())));
  count = std::clamp<std::size_t>(count, 1, doc_ids.size() - 1);
  std::vector<std::string> val(doc_ids.begin(), doc_ids.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(val.begin(), val.end());
  return val;
}

namespace {

struct Prepared {
  std::vector<PairFeatures> phis;
  std::size_t gold = 0;
};

struct Eval {
  double loss = 0;
  double top1 = 0;
  double topk = 0;
};

Eval evaluate(const ScoringModel& model, const std::vector<Prepared>& prepared, const std::vector<std::size_t>& idx,
              int k) {
  Eval e;
  if (idx.empty()) return e;
  for (auto s : idx) {
    const auto& p = prepared[s];
    std::vector<double> logits;
    logits.reserve(p.phis.size());
    for (const auto& phi : p.phis) logits.push_back(score(model, phi));
    e.loss += cross_entropy(logits, p.gold);
    auto ranked = top_k(logits, k);
    if (static_cast<std::size_t>(ranked.front()) == p.gold) e.top1 += 1;
    if (std::find(ranked.begin(), ranked.end(), static_cast<int>(p.gold)) != ranked.end()) e.topk += 1;
  }
  auto n = static_cast<double>(idx.size());
  e.loss /= n;
  e.top1 /= n;
  e.topk /= n;
  return e;
}

}  // namespace

TrainResult train(const std::vector<TrainingSample>& samples, const DocumentCollection& docs,
                  const TrainConfig& config) {
  config.validate();
  if (samples.size() < 2) {
    throw InsufficientData("training needs at least 2 samples, got " + std::to_string(samples.size()));
  }
  auto started = std::chrono::steady_clock::now();

  std::vector<const ParsedDocument*> sample_docs(samples.size());
  std::map<std::string, std::size_t> doc_slot;
  std::vector<const ParsedDocument*> unique_docs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto* doc = docs.find(s.doc_id);
    if (!doc) throw ModelError("sample " + s.qa_id + " references unknown document " + s.doc_id);
    if (s.gold_index < 0 || static_cast<std::size_t>(s.gold_index) >= doc->entities.size()) {
      throw ModelError("sample " + s.qa_id + " has gold_index " + std::to_string(s.gold_index) + " outside [0, " +
                       std::to_string(doc->entities.size()) + ")");
    }
    sample_docs[i] = doc;
    if (doc_slot.emplace(doc->doc_id, unique_docs.size()).second) unique_docs.push_back(doc);
  }

  std::vector<std::vector<FeatureBundle>> bundles(unique_docs.size());
  parallel_for(unique_docs.size(), config.workers,
               [&](std::size_t i) { bundles[i] = extract_features(*unique_docs[i], config.features); });
  std::vector<Prepared> prepared(samples.size());
  parallel_for(samples.size(), config.workers, [&](std::size_t i) {
    const auto& s = samples[i];
    auto query = Query::make(s.question, s.initial_answer, config.features);
    prepared[i].phis = document_features(query, *sample_docs[i], bundles[doc_slot.at(s.doc_id)]);
    prepared[i].gold = static_cast<std::size_t>(s.gold_index);
  });

  std::vector<std::string> ids;
  ids.reserve(unique_docs.size());
  for (const auto* d : unique_docs) ids.push_back(d->doc_id);
  auto val_docs = split_validation_docs(ids, config.val_fraction, config.seed);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bool held_out = std::binary_search(val_docs.begin(), val_docs.end(), samples[i].doc_id);
    (held_out ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) throw InsufficientData("no training samples left after the validation split");

  auto model = config.features.hidden_units > 0 ? ScoringModel::mlp(config.features, config.seed)
                                                : ScoringModel::linear(config.features);
  AdamWState state;
  state.m.assign(model.weights.size(), 0.0);
  state.v.assign(model.weights.size(), 0.0);

  TrainResult result{model, state, {}};
  result.report.train_samples = train_idx.size();
  result.report.val_samples = val_idx.size();
  result.report.val_doc_ids = val_docs;
  double best = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order = train_idx;
  std::vector<double> grad(model.weights.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      auto end = std::min(order.size(), start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (auto b = start; b < end; ++b) {
        const auto& p = prepared[order[b]];
        double loss = loss_and_gradient(model, p.phis, p.gold, grad);
        if (!std::isfinite(loss)) {
          throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start) +
                              ": sample " + samples[order[b]].qa_id + " (doc " + samples[order[b]].doc_id +
                              ") produced loss " + std::to_string(loss));
        }
        epoch_loss += loss;
      }
      double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) {
        g *= scale;
        if (!std::isfinite(g)) {
          throw NonFiniteLoss("epoch " + std::to_string(epoch) + ": non-finite gradient in batch starting at " +
                              std::to_string(start));
        }
      }
      adamw_step(model.weights, grad, state, config.optimizer);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    auto val = evaluate(model, prepared, val_idx, config.top_k);
    stats.val_loss = val.loss;
    stats.val_top1 = val.top1;
    stats.val_topk = val.topk;
    result.report.epochs.push_back(stats);
    spdlog::info("epoch {}: train loss {:.6f}, val loss {:.6f}, val top-1 {:.3f}, val top-{} {:.3f}", epoch,
                 stats.train_loss, stats.val_loss, stats.val_top1, config.top_k, stats.val_topk);

    double criterion = val_idx.empty() ? stats.train_loss : stats.val_loss;
    if (criterion < best) {
      best = criterion;
      result.model = model;
      result.optimizer = state;
      result.report.best_epoch = epoch;
    }
  }

  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json train_cfg{{"batch_size", config.batch_size},
                 {"learning_rate", config.optimizer.learning_rate},
                 {"beta1", config.optimizer.beta1},
                 {"beta2", config.optimizer.beta2},
                 {"epsilon", config.optimizer.epsilon},
                 {"weight_decay", config.optimizer.weight_decay},
                 {"epochs", config.epochs},
                 {"seed", config.seed},
                 {"val_fraction", config.val_fraction},
                 {"top_k", config.top_k}};
  result.model.metadata = json{{"train_config", train_cfg}, {"report", result.report}};
  return result;
}

TrainedRanker::TrainedRanker(ScoringModel model) : model_(std::move(model)) { model_.check(); }

std::vector<double> TrainedRanker::logits(const std::string& question, const std::string& answer,
                                          const ParsedDocument& doc) {
  return predict(model_, question, answer, doc);
}

ServedRanker::ServedRanker(std::string url, std::shared_ptr<agents::HttpTransport> transport,
                           std::chrono::seconds timeout)
    : url_(std::move(url)), transport_(transport ? std::move(transport) : agents::make_http_transport()),
      timeout_(timeout) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
  if (url_.empty()) throw ConfigValidationError("inference.served_url", "required for the served retriever");
}

std::vector<double> ServedRanker::logits(const std::string& question, const std::string& answer,
                                         const ParsedDocument& doc) {
  json body{{"question", question}, {"answer", answer}, {"doc", doc}};
  auto res = transport_->post(url_ + "/score", {}, body.dump(), timeout_);
  if (res.status == 0) throw ProviderUnreachable("served retriever at " + url_ + ": " + res.error);
  if (res.status < 200 || res.status >= 300) {
    throw ModelError("served retriever returned HTTP " + std::to_string(res.status));
  }
  auto reply = json::parse(res.body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("logits") || !reply["logits"].is_array()) {
    throw ModelError("served retriever reply has no logits array");
  }
  std::vector<double> out;
  for (const auto& v : reply["logits"]) {
    if (!v.is_number()) throw ModelError("served retriever logits must be numbers");
    out.push_back(v.get<double>());
  }
  if (out.size() != doc.entities.size()) {
    throw ModelError("served retriever returned " + std::to_string(out.size()) + " logits for " +
                     std::to_string(doc.entities.size()) + " entities");
  }
  return out;
}

}  // namespace docs2synth::retriever
