// rails: command-line front end for training, attacking, predicting,
// evaluating, hardening and tracing.
//
// Every option can also be given in a flat key = value file passed with
// --config; flags on the command line win over the file. RAILS_SEED, when
// set, replaces the seed from either source.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rails/experiment.hpp"

namespace fs = std::filesystem;
using namespace rails;

namespace {

struct Options {
  ExperimentSpec spec;
  std::string crossover = "literal";
  std::string attack = "pgd";
  bool no_early_stop = false;
  bool no_random_start = false;

  // Subcommand-specific.
  std::size_t index = 0;
  std::string images, labels;
  std::string out_images, out_labels;
  std::size_t queries = 10;
  bool adversarial = false;
};

void add_shared_options(CLI::App& app, Options& o) {
  auto& s = o.spec;
  app.add_option("--seed", s.seed, "Experiment seed");
  app.add_option("--train-images", s.train_images, "IDX image file for the training pool (gzip ok)");
  app.add_option("--train-labels", s.train_labels, "IDX label file for the training pool");
  app.add_option("--test-images", s.test_images, "IDX image file for test and harden batches");
  app.add_option("--test-labels", s.test_labels, "IDX label file for test and harden batches");
  app.add_option("--classes", s.classes, "Number of classes in IDX data");
  app.add_option("--synth-classes", s.synth.classes, "Synthetic data: classes");
  app.add_option("--synth-per-class", s.synth.per_class, "Synthetic data: examples per class");
  app.add_option("--synth-dim", s.synth.dim, "Synthetic data: dimension");
  app.add_option("--synth-spread", s.synth.spread, "Synthetic data: spread of class centres");
  app.add_option("--synth-noise", s.synth.noise, "Synthetic data: noise std-dev");

  app.add_option("--train-size", s.train_size, "Training examples (0: all remaining)");
  app.add_option("--test-size", s.test_size, "Test batch size");
  app.add_option("--calibration-size", s.calibration_size, "DkNN calibration examples");
  app.add_option("--harden-size", s.harden_size, "Attacked queries used for hardening");

  app.add_option("--hidden", s.hidden, "Hidden layer widths")->delimiter(',');
  app.add_option("--epochs", s.training.epochs, "Training epochs");
  app.add_option("--learning-rate", s.training.learning_rate, "SGD learning rate");
  app.add_option("--batch-size", s.training.batch_size, "SGD mini-batch size");
  app.add_option("--weights", s.weights, "Weight file (loaded if present)");

  auto& r = s.rails;
  app.add_option("--k", r.k, "Flocking neighbours per class and layer");
  app.add_option("--layers", r.layers, "RAILS layers (0 = input)")->delimiter(',');
  app.add_option("--temperatures", r.temperatures, "Selection temperature per layer, or one for all")->delimiter(',');
  app.add_option("--population", r.expansion.population, "Population size T");
  app.add_option("--generations", r.expansion.generations, "Maximum generations G");
  app.add_option("--mutation-prob", r.expansion.mutation_prob, "Per-entry mutation probability");
  app.add_option("--delta-min", r.expansion.delta_min, "Smallest mutation magnitude");
  app.add_option("--delta-max", r.expansion.delta_max, "Largest mutation magnitude");
  app.add_option("--crossover", o.crossover, "Crossover weighting")->check(CLI::IsMember({"literal", "inverted"}));
  app.add_flag("--no-early-stop", o.no_early_stop, "Always run G generations");
  app.add_option("--early-stop-fraction", r.expansion.early_stop_fraction, "Class share that ends expansion");
  app.add_option("--plasma-fraction", r.plasma_fraction, "Share of the population kept as plasma");
  app.add_option("--memory-fraction", r.memory_fraction, "Share of the population kept as memory");
  app.add_option("--dknn-k", r.dknn_k, "DkNN neighbours per layer");
  app.add_option("--dknn-layers", s.dknn_layers, "DkNN layers")->delimiter(',');

  app.add_option("--attack", o.attack, "Attack kind")->check(CLI::IsMember({"fgsm", "pgd"}));
  app.add_option("--epsilon", s.attack.epsilon, "L-infinity budget");
  app.add_option("--attack-steps", s.attack.steps, "PGD iterations");
  app.add_option("--attack-step-size", s.attack.step_size, "PGD step (0: 2.5 eps / steps)");
  app.add_flag("--no-random-start", o.no_random_start, "Start PGD at the clean input");

  app.add_option("--memory-capacity", s.memory_capacity, "Memory bank capacity (0: unbounded)");
  app.add_option("--output-dir", s.output_dir, "Directory for CSV and bank output");
  app.add_flag("--traces", s.write_traces, "Also write per-generation traces");
  app.add_option("--threads", s.threads, "Worker threads");
}

void finish(Options& o) {
  auto& s = o.spec;
  s.rails.expansion.crossover = o.crossover == "inverted" ? CrossoverMode::inverted : CrossoverMode::literal;
  s.rails.expansion.early_stop = !o.no_early_stop;
  s.attack.kind = parse_attack_kind(o.attack);
  s.attack.random_start = !o.no_random_start;
  if (const char* env = std::getenv("RAILS_SEED")) {
    try {
      std::size_t used = 0;
      s.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("RAILS_SEED is not an unsigned integer: ") + env);
    }
  }
  s.validate();
}

void print_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::cout << in.rdbuf();
}

int cmd_train(Options& o) {
  const auto spec = o.spec.resolved();
  detail::require_config(!spec.weights.empty(), "train needs --weights");
  const auto splits = prepare_data(spec);
  const auto net = train_network(splits.train, architecture(spec, splits.train), spec.training);
  save_weights(net, spec.weights);
  std::cout << "train_size," << splits.train.size() << "\n";
  std::cout << "test_accuracy_pct," << detail::fixed(100.0 * accuracy(net, splits.test), 2) << "\n";
  std::cout << "weights," << spec.weights << "\n";
  return 0;
}

int cmd_attack(Options& o) {
  const auto spec = o.spec.resolved();
  const auto splits = prepare_data(spec);
  const auto net = obtain_network(spec, splits.train);
  const auto adv = attack_batch(splits.test, net, spec.attack, spec.seed, 0);
  const fs::path dir = spec.output_dir;
  const fs::path img = o.out_images.empty() ? dir / "adversarial-images.idx" : fs::path(o.out_images);
  const fs::path lab = o.out_labels.empty() ? dir / "adversarial-labels.idx" : fs::path(o.out_labels);
  if (img.has_parent_path()) fs::create_directories(img.parent_path());
  if (lab.has_parent_path()) fs::create_directories(lab.parent_path());
  save_idx(adv, img, lab);
  std::cout << "examples," << adv.size() << "\n";
  std::cout << "clean_accuracy_pct," << detail::fixed(100.0 * accuracy(net, splits.test), 2) << "\n";
  std::cout << "adversarial_accuracy_pct," << detail::fixed(100.0 * accuracy(net, adv), 2) << "\n";
  std::cout << "images," << img.string() << "\nlabels," << lab.string() << "\n";
  return 0;
}

int cmd_predict(Options& o) {
  const auto spec = o.spec.resolved();
  const auto splits = prepare_data(spec);
  Dataset source = splits.test;
  if (!o.images.empty()) {
    detail::require_config(!o.labels.empty(), "predict --images also needs --labels");
    source = load_idx(o.images, o.labels, splits.train.class_count());
  }
  detail::require_config(o.index < source.size(), "query index " + std::to_string(o.index) + " out of range (" +
                                                      std::to_string(source.size()) + " examples)");
  const Pipeline pipe(obtain_network(spec, splits.train), splits.train, splits.calibration, spec.rails,
                      spec.dknn_layers);
  const auto& q = source[o.index];
  const auto pred = rails_predict(q.x, o.index, *pipe.rails_index, spec.rails);
  const auto dk = sense(q.x, *pipe.dknn_index, pipe.calibration, spec.rails.dknn_k);

  nlohmann::json j;
  j["query_id"] = o.index;
  j["true_label"] = q.label;
  j["cnn_label"] = pipe.net.predict(q.x);
  j["rails"]["label"] = pred.label;
  j["rails"]["confidence"] = pred.confidence;
  j["rails"]["votes"] = pred.votes;
  for (const auto& l : pred.maturation.layers)
    j["rails"]["layers"].push_back({{"layer", l.layer}, {"final_generation", l.final_generation},
                                    {"plasma", l.plasma.size()}, {"memory", l.memory.size()}});
  j["dknn"]["label"] = dk.label;
  j["dknn"]["counts"] = dk.counts;
  j["dknn"]["credibility"] = dk.credibility;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(Options& o) {
  const auto ev = evaluate(o.spec);
  write_evaluation(ev, ev.spec.output_dir);
  print_file(fs::path(ev.spec.output_dir) / "metrics.csv");
  return 0;
}

int cmd_harden(Options& o) {
  const auto h = run_ssal(o.spec);
  const fs::path dir = h.spec.output_dir;
  fs::create_directories(dir);
  save_bank(h.bank, dir / "memory_bank.bin");
  detail::write_text(dir / "harden.csv", harden_csv(h));
  print_file(dir / "harden.csv");
  return 0;
}

int cmd_trace(Options& o) {
  const auto spec = o.spec.resolved();
  const auto splits = prepare_data(spec);
  const Pipeline pipe(obtain_network(spec, splits.train), splits.train, Dataset{}, spec.rails, spec.dknn_layers);
  const auto n = std::min(o.queries, splits.test.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = splits.test.subset(idx);
  const auto clean = pipe.run_batch(batch, 0, spec.threads, true);
  BatchResult adversarial;
  if (o.adversarial)
    adversarial = pipe.run_batch(attack_batch(batch, pipe.net, spec.attack, spec.seed, 0), 0, spec.threads, true);
  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  detail::write_text(dir / "traces.csv", traces_csv(clean, adversarial));
  std::cout << "queries," << n << "\ntraces," << (dir / "traces.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAILS robust classification experiments"};
  app.set_config("--config", "", "Flat key = value configuration file");
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  add_shared_options(app, o);

  auto* train = app.add_subcommand("train", "Train the feature network and save its weights");
  auto* attack = app.add_subcommand("attack", "Write the attacked test batch as IDX files");
  attack->add_option("--out-images", o.out_images, "Output image file (default <output-dir>/adversarial-images.idx)");
  attack->add_option("--out-labels", o.out_labels, "Output label file (default <output-dir>/adversarial-labels.idx)");
  auto* predict = app.add_subcommand("predict", "Classify one query and print the result as JSON");
  predict->add_option("--index", o.index, "Query position in the test batch or input file");
  predict->add_option("--images", o.images, "IDX images to draw the query from instead of the test batch");
  predict->add_option("--labels", o.labels, "IDX labels matching --images");
  auto* eval = app.add_subcommand("eval", "Evaluate CNN, DkNN and RAILS on clean and attacked test data");
  auto* harden = app.add_subcommand("harden", "Bank memory from attacked queries and re-evaluate DkNN");
  auto* trace = app.add_subcommand("trace", "Write per-generation class share and affinity traces");
  trace->add_option("--queries", o.queries, "Number of test queries to trace");
  trace->add_flag("--adversarial", o.adversarial, "Also trace the attacked counterparts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    finish(o);
    if (*train) return cmd_train(o);
    if (*attack) return cmd_attack(o);
    if (*predict) return cmd_predict(o);
    if (*eval) return cmd_eval(o);
    if (*harden) return cmd_harden(o);
    if (*trace) return cmd_trace(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
