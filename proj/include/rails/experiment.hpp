#pragma once

// Experiment orchestration: data splits, network acquisition, clean and
// attacked evaluation of CNN / DkNN / RAILS, single-stage adaptive learning,
// and the CSV artefacts each run leaves behind.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rails/adaptive.hpp"
#include "rails/attacks.hpp"
#include "rails/dknn.hpp"
#include "rails/error.hpp"
#include "rails/featmap.hpp"
#include "rails/idx.hpp"
#include "rails/maturation.hpp"
#include "rails/metrics.hpp"
#include "rails/synth.hpp"

namespace rails {

struct ExperimentSpec {
  // IDX source; synthetic blobs when train_images is empty.
  std::string train_images;
  std::string train_labels;
  std::string test_images;  // optional: carve the test batch from the training pool when empty
  std::string test_labels;
  int classes = 10;
  SynthSpec synth;

  std::size_t train_size = 0;  // 0: everything left after the other splits
  std::size_t test_size = 500;
  std::size_t calibration_size = 200;
  std::size_t harden_size = 200;

  std::vector<std::size_t> hidden{256, 128};
  TrainOptions training;
  std::string weights;  // loaded when the file exists

  RailsConfig rails;
  std::vector<int> dknn_layers;  // empty: input layer plus all hidden layers
  AttackConfig attack;
  std::size_t memory_capacity = 0;  // 0: unbounded

  std::uint64_t seed = 0;
  std::string output_dir = "rails_out";
  bool write_traces = false;
  unsigned threads = 1;

  bool synthetic() const { return train_images.empty(); }

  // Copy with the experiment seed pushed into every component.
  ExperimentSpec resolved() const {
    ExperimentSpec s = *this;
    s.rails.seed = seed;
    s.training.seed = seed;
    s.synth.seed = seed;
    if (s.synthetic()) s.classes = s.synth.classes;
    return s;
  }

  void validate() const {
    detail::require_config(classes >= 1, "class count must be positive");
    detail::require_config(test_size >= 1, "test size must be positive");
    detail::require_config(synthetic() || !train_labels.empty(), "train label file missing");
    detail::require_config(test_images.empty() == test_labels.empty(), "give both test image and label files or neither");
    detail::require_config(threads >= 1, "threads must be >= 1");
    rails.validate();
    attack.validate();
  }
};

struct Splits {
  Dataset train, calibration, test, harden;
};

// Deterministic shuffle of the pool(s), then carve test, harden,
// calibration and training data in that order. Calibration always comes out
// of the training pool, ahead of the kNN reference set.
inline Splits prepare_data(const ExperimentSpec& raw) {
  const auto spec = raw.resolved();
  Dataset pool;
  if (spec.synthetic()) {
    pool = synth_dataset(spec.synth);
  } else {
    pool = load_idx(spec.train_images, spec.train_labels, spec.classes);
  }
  Dataset test_pool;
  const bool separate_test = !spec.test_images.empty();
  if (separate_test) test_pool = load_idx(spec.test_images, spec.test_labels, spec.classes);

  auto permutation = [&](std::size_t n, std::uint64_t tag) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    auto rng = derive_stream(spec.seed, 1, Purpose::shuffle).fork({tag});
    rng.shuffle(p.begin(), p.end());
    return p;
  };
  auto take = [](const std::vector<std::size_t>& perm, std::size_t& at, std::size_t n) {
    std::vector<std::size_t> out(perm.begin() + static_cast<std::ptrdiff_t>(at),
                                 perm.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return out;
  };

  Splits s;
  const auto perm = permutation(pool.size(), 0);
  std::size_t at = 0;
  if (separate_test) {
    detail::require_config(spec.test_size + spec.harden_size <= test_pool.size(),
                           "test + harden sizes exceed the test pool (" + std::to_string(test_pool.size()) + ")");
    const auto tperm = permutation(test_pool.size(), 1);
    std::size_t tat = 0;
    s.test = test_pool.subset(take(tperm, tat, spec.test_size));
    s.harden = test_pool.subset(take(tperm, tat, spec.harden_size));
  } else {
    detail::require_config(spec.test_size + spec.harden_size + spec.calibration_size < pool.size(),
                           "split sizes exceed the data pool (" + std::to_string(pool.size()) + ")");
    s.test = pool.subset(take(perm, at, spec.test_size));
    s.harden = pool.subset(take(perm, at, spec.harden_size));
  }
  detail::require_config(at + spec.calibration_size + spec.train_size <= pool.size(),
                         "calibration + train sizes exceed the training pool (" + std::to_string(pool.size()) + ")");
  s.calibration = pool.subset(take(perm, at, spec.calibration_size));
  const std::size_t n_train = spec.train_size ? spec.train_size : pool.size() - at;
  detail::require_config(n_train > 0, "no training data left after carving the other splits");
  s.train = pool.subset(take(perm, at, n_train));
  return s;
}

inline std::vector<std::size_t> architecture(const ExperimentSpec& spec, const Dataset& train) {
  std::vector<std::size_t> arch{train.dim()};
  arch.insert(arch.end(), spec.hidden.begin(), spec.hidden.end());
  arch.push_back(static_cast<std::size_t>(train.class_count()));
  return arch;
}

// Loads spec.weights when that file exists, otherwise trains from scratch.
inline FeatureNetwork obtain_network(const ExperimentSpec& raw, const Dataset& train) {
  const auto spec = raw.resolved();
  if (!spec.weights.empty() && std::filesystem::exists(spec.weights)) {
    auto net = load_weights(spec.weights);
    if (net.input_dim() != train.dim() || net.class_count() != train.class_count())
      throw ValidationError(spec.weights + ": network shape does not match the data");
    return net;
  }
  return train_network(train, architecture(spec, train), spec.training);
}

// Runs fn(i) for i in [0, n) over `threads` workers. Each index writes only
// its own output slot, so results are independent of scheduling.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct QueryRecord {
  std::uint64_t query_id = 0;
  int truth = 0;
  int rails_label = 0;
  double rails_confidence = 0.0;
  int dknn_label = 0;
  double dknn_credibility = 0.0;
  int cnn_label = 0;
};

struct BatchResult {
  std::vector<QueryRecord> records;
  std::vector<std::vector<GenerationTrace>> traces;  // per query, per layer
  std::vector<MaturationResult> maturation;          // per query
};

// Models shared by every query of an experiment.
struct Pipeline {
  FeatureNetwork net;
  LayerSelection dknn_layers;
  LayerSelection rails_layers;
  std::unique_ptr<ReferenceIndex> dknn_index;
  std::unique_ptr<ReferenceIndex> rails_index;
  CalibrationSet calibration;
  RailsConfig rails;

  Pipeline(FeatureNetwork network, const Dataset& train, const Dataset& calibration_data, const RailsConfig& cfg,
           const std::vector<int>& dknn_layer_list = {}, const MemoryBank& memory = {})
      : net(std::move(network)),
        dknn_layers(dknn_layer_list.empty() ? net.default_layers() : LayerSelection(dknn_layer_list, net.depth())),
        rails_layers(cfg.layer_selection(net)),
        rails(cfg) {
    dknn_index = std::make_unique<ReferenceIndex>(train, MemoryBank{}, net, dknn_layers);
    rails_index = std::make_unique<ReferenceIndex>(train, memory, net, rails_layers);
    if (!calibration_data.empty()) calibration = CalibrationSet(calibration_data, *dknn_index, cfg.dknn_k);
  }
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  QueryRecord run(const LabeledExample& q, std::uint64_t id, std::vector<GenerationTrace>* traces,
                  MaturationResult* maturation) const {
    QueryRecord r;
    r.query_id = id;
    r.truth = q.label;
    r.cnn_label = net.predict(q.x);
    auto dk = dknn_predict(q.x, *dknn_index, rails.dknn_k);
    r.dknn_label = dk.label;
    r.dknn_credibility = calibration.empty() ? 0.0 : credibility(dk, calibration, rails.dknn_k);
    auto pred = rails_predict(q.x, id, *rails_index, rails);
    r.rails_label = pred.label;
    r.rails_confidence = pred.confidence;
    if (traces) *traces = std::move(pred.traces);
    if (maturation) *maturation = std::move(pred.maturation);
    return r;
  }

  BatchResult run_batch(const Dataset& batch, std::uint64_t first_id, unsigned threads, bool keep_traces,
                        bool keep_maturation = false) const {
    BatchResult out;
    out.records.resize(batch.size());
    if (keep_traces) out.traces.resize(batch.size());
    if (keep_maturation) out.maturation.resize(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
      out.records[i] = run(batch[i], first_id + i, keep_traces ? &out.traces[i] : nullptr,
                           keep_maturation ? &out.maturation[i] : nullptr);
    });
    return out;
  }
};

struct Evaluation {
  ExperimentSpec spec;
  FeatureNetwork net;
  double network_test_accuracy = 0.0;
  std::size_t train_size = 0;
  MetricsReport report;
  BatchResult clean, adversarial;
};

inline MethodLabels labels_of(const BatchResult& b) {
  MethodLabels m;
  for (const auto& r : b.records) {
    m.cnn.push_back(r.cnn_label);
    m.dknn.push_back(r.dknn_label);
    m.rails.push_back(r.rails_label);
  }
  return m;
}

// Clean test batch and its attacked counterpart; a query keeps its id (and
// hence its random streams) across the two batches.
inline Evaluation evaluate(const ExperimentSpec& raw) {
  raw.validate();
  const auto spec = raw.resolved();
  const auto splits = prepare_data(spec);
  Pipeline pipe(obtain_network(spec, splits.train), splits.train, splits.calibration, spec.rails, spec.dknn_layers);
  const auto adv = attack_batch(splits.test, pipe.net, spec.attack, spec.seed, 0);

  Evaluation ev;
  ev.spec = spec;
  ev.net = pipe.net;
  ev.train_size = splits.train.size();
  ev.network_test_accuracy = accuracy(pipe.net, splits.test);
  ev.clean = pipe.run_batch(splits.test, 0, spec.threads, spec.write_traces);
  ev.adversarial = pipe.run_batch(adv, 0, spec.threads, spec.write_traces);
  for (const auto& e : splits.test.examples()) ev.report.truth.push_back(e.label);
  ev.report.clean = labels_of(ev.clean);
  ev.report.adversarial = labels_of(ev.adversarial);
  return ev;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
std::string join_num(const std::vector<T>& v, int digits) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fixed(static_cast<double>(v[i]), digits);
  return s;
}

}  // namespace detail

inline std::string prediction_log_csv(const BatchResult& b) {
  std::ostringstream out;
  out << "query_id,true_label,rails_label,rails_confidence,dknn_label,dknn_credibility\n";
  for (const auto& r : b.records)
    out << r.query_id << ',' << r.truth << ',' << r.rails_label << ',' << detail::fixed(r.rails_confidence, 4) << ','
        << r.dknn_label << ',' << detail::fixed(r.dknn_credibility, 4) << '\n';
  return out.str();
}

// One row per method and batch; accuracy in percent with two decimals.
inline std::string metrics_csv(const MetricsReport& m) {
  std::ostringstream out;
  out << "method,batch,correct,total,accuracy_pct\n";
  const std::pair<const char*, const std::vector<int> MethodLabels::*> methods[] = {
      {"rails", &MethodLabels::rails}, {"dknn", &MethodLabels::dknn}, {"cnn", &MethodLabels::cnn}};
  for (const auto& [name, field] : methods) {
    for (const auto& [batch, acc] : {std::pair{"clean", m.sa(field)}, std::pair{"adversarial", m.ra(field)}})
      out << name << ',' << batch << ',' << acc.correct << ',' << acc.total << ','
          << detail::fixed(100.0 * acc.rate(), 2) << '\n';
  }
  return out.str();
}

inline std::string intersections_csv(const MetricsReport& m) {
  std::ostringstream out;
  out << "batch,rails_correct_dknn_correct,rails_correct_dknn_wrong,rails_wrong_dknn_correct,rails_wrong_dknn_wrong\n";
  for (const auto& [batch, mat] :
       {std::pair{"clean", m.clean_intersection()}, std::pair{"adversarial", m.adversarial_intersection()}}) {
    out << batch;
    for (double v : mat) out << ',' << detail::fixed(100.0 * v, 2);
    out << '\n';
  }
  return out.str();
}

// Effective settings, including any reduced population or generation budget.
inline std::string settings_csv(const ExperimentSpec& s, std::size_t train_size, double net_accuracy) {
  std::ostringstream out;
  out << "key,value\n";
  out << "seed," << s.seed << '\n';
  out << "source," << (s.synthetic() ? "synthetic" : s.train_images) << '\n';
  out << "train_size," << train_size << '\n';
  out << "test_size," << s.test_size << '\n';
  out << "calibration_size," << s.calibration_size << '\n';
  out << "hidden," << detail::join_num(s.hidden, 0) << '\n';
  out << "network_test_accuracy_pct," << detail::fixed(100.0 * net_accuracy, 2) << '\n';
  out << "k," << s.rails.k << '\n';
  out << "dknn_k," << s.rails.dknn_k << '\n';
  out << "layers," << detail::join(s.rails.layers) << '\n';
  out << "dknn_layers," << detail::join(s.dknn_layers) << '\n';
  out << "temperatures," << detail::join_num(s.rails.temperatures, 4) << '\n';
  out << "population_T," << s.rails.expansion.population << '\n';
  out << "generations_G," << s.rails.expansion.generations << '\n';
  out << "mutation_prob," << detail::fixed(s.rails.expansion.mutation_prob, 4) << '\n';
  out << "delta_min," << detail::fixed(s.rails.expansion.delta_min, 4) << '\n';
  out << "delta_max," << detail::fixed(s.rails.expansion.delta_max, 4) << '\n';
  out << "crossover," << (s.rails.expansion.crossover == CrossoverMode::literal ? "literal" : "inverted") << '\n';
  out << "early_stop," << (s.rails.expansion.early_stop ? 1 : 0) << '\n';
  out << "plasma_fraction," << detail::fixed(s.rails.plasma_fraction, 4) << '\n';
  out << "memory_fraction," << detail::fixed(s.rails.memory_fraction, 4) << '\n';
  out << "attack," << to_string(s.attack.kind) << '\n';
  out << "epsilon," << detail::fixed(s.attack.epsilon, 6) << '\n';
  out << "attack_steps," << s.attack.steps << '\n';
  out << "attack_step_size," << detail::fixed(s.attack.effective_step(), 6) << '\n';
  return out.str();
}

inline std::string traces_csv(const BatchResult& clean, const BatchResult& adversarial) {
  std::ostringstream out;
  out << "batch,query_id,layer,generation,class,proportion,mean_affinity\n";
  for (const auto& [name, batch] : {std::pair{"clean", &clean}, std::pair{"adversarial", &adversarial}})
    for (std::size_t q = 0; q < batch->traces.size(); ++q)
      for (const auto& t : batch->traces[q])
        t.write_rows(out, std::string(name) + "," + std::to_string(batch->records[q].query_id) + "," +
                              std::to_string(t.layer) + ",");
  return out.str();
}

inline void write_evaluation(const Evaluation& ev, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "metrics.csv", metrics_csv(ev.report));
  detail::write_text(dir / "intersections.csv", intersections_csv(ev.report));
  detail::write_text(dir / "predictions_clean.csv", prediction_log_csv(ev.clean));
  detail::write_text(dir / "predictions_adversarial.csv", prediction_log_csv(ev.adversarial));
  detail::write_text(dir / "settings.csv", settings_csv(ev.spec, ev.train_size, ev.network_test_accuracy));
  if (ev.spec.write_traces) detail::write_text(dir / "traces.csv", traces_csv(ev.clean, ev.adversarial));
}

struct HardenOutcome {
  ExperimentSpec spec;
  MemoryBank bank;
  AccuracyCount rails_on_harden_batch;
  AccuracyCount dknn_sa_before, dknn_ra_before, dknn_sa_after, dknn_ra_after;
};

inline std::vector<int> dknn_labels(const ReferenceIndex& index, const Dataset& batch, std::size_t k,
                                    unsigned threads) {
  std::vector<int> out(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) { out[i] = dknn_predict(batch[i].x, index, k).label; });
  return out;
}

// Single-stage adaptive learning: RAILS runs on the attacked harden batch,
// its memory data is banked, and DkNN is re-evaluated on a fresh clean and
// attacked test batch with the bank folded into its reference set.
inline HardenOutcome run_ssal(const ExperimentSpec& raw, const FeatureNetwork* pretrained = nullptr) {
  raw.validate();
  const auto spec = raw.resolved();
  detail::require_config(spec.harden_size >= 1, "hardening needs a non-empty harden batch");
  const auto splits = prepare_data(spec);
  Pipeline pipe(pretrained ? *pretrained : obtain_network(spec, splits.train), splits.train, Dataset{}, spec.rails,
                spec.dknn_layers);

  const std::uint64_t harden_base = splits.test.size();
  const auto attacked = attack_batch(splits.harden, pipe.net, spec.attack, spec.seed, harden_base);
  const auto batch = pipe.run_batch(attacked, harden_base, spec.threads, false, true);

  HardenOutcome out;
  out.spec = spec;
  out.bank = MemoryBank(spec.memory_capacity ? std::optional<std::size_t>(spec.memory_capacity) : std::nullopt);
  for (const auto& m : batch.maturation) absorb(out.bank, m);
  std::vector<int> rails_labels, harden_truth;
  for (const auto& r : batch.records) {
    rails_labels.push_back(r.rails_label);
    harden_truth.push_back(r.truth);
  }
  out.rails_on_harden_batch = count_correct(rails_labels, harden_truth);

  const auto adv = attack_batch(splits.test, pipe.net, spec.attack, spec.seed, 0);
  std::vector<int> truth;
  for (const auto& e : splits.test.examples()) truth.push_back(e.label);
  const auto k = spec.rails.dknn_k;
  out.dknn_sa_before = count_correct(dknn_labels(*pipe.dknn_index, splits.test, k, spec.threads), truth);
  out.dknn_ra_before = count_correct(dknn_labels(*pipe.dknn_index, adv, k, spec.threads), truth);
  const ReferenceIndex hardened(harden(splits.train, out.bank), MemoryBank{}, pipe.net, pipe.dknn_layers);
  out.dknn_sa_after = count_correct(dknn_labels(hardened, splits.test, k, spec.threads), truth);
  out.dknn_ra_after = count_correct(dknn_labels(hardened, adv, k, spec.threads), truth);
  return out;
}

inline std::string harden_csv(const HardenOutcome& h) {
  std::ostringstream out;
  out << "stage,metric,correct,total,accuracy_pct\n";
  auto row = [&](const char* stage, const char* metric, const AccuracyCount& a) {
    out << stage << ',' << metric << ',' << a.correct << ',' << a.total << ',' << detail::fixed(100.0 * a.rate(), 2)
        << '\n';
  };
  row("before", "dknn_sa", h.dknn_sa_before);
  row("before", "dknn_ra", h.dknn_ra_before);
  row("after", "dknn_sa", h.dknn_sa_after);
  row("after", "dknn_ra", h.dknn_ra_after);
  row("harden_batch", "rails_ra", h.rails_on_harden_batch);
  return out.str();
}

}  // namespace rails
