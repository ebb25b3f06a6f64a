// se-kge: command-line front end for ingest, evidence metrics, training,
// evaluation and bucket reports.

#include <omp.h>
#if __has_include(<malloc.h>)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sekge/checkpoint.hpp"
#include "sekge/config.hpp"
#include "sekge/csv.hpp"
#include "sekge/error.hpp"
#include "sekge/evaluation.hpp"
#include "sekge/kg_core.hpp"
#include "sekge/se_metrics.hpp"
#include "sekge/training.hpp"

namespace {

using namespace sekge;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void set_threads(int threads) {
  if (threads < 1) throw UsageError("--threads must be at least 1");
  omp_set_num_threads(threads);
}

/// Output file or standard output when the path is empty.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw DataError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

IngestOptions ingest_options(bool allow_unseen) {
  IngestOptions o;
  o.unseen = allow_unseen ? UnseenPolicy::keep : UnseenPolicy::error;
  return o;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string data_dir;
  bool stats = false;
  bool allow_unseen = false;
  std::size_t top_entities = 0;
  std::string out_dir;
};

int run_ingest(const IngestArgs& a) {
  const auto store = TripleStore::ingest(a.data_dir, ingest_options(a.allow_unseen));
  std::size_t dropped = 0;
  for (auto s : {Split::train, Split::valid, Split::test}) {
    dropped += store.stats(s).duplicates_dropped;
  }
  std::cerr << "ingested " << store.num_entities() << " entities, "
            << store.vocab().num_base_relations() << " relations from " << a.data_dir;
  if (dropped) std::cerr << " (" << dropped << " duplicate triples dropped)";
  std::cerr << '\n';

  if (a.stats) {
    auto& out = std::cout;
    out << "split,triples,entities_seen,relations_seen\n";
    std::size_t total = 0;
    for (auto s : {Split::train, Split::valid, Split::test}) {
      const auto& st = store.stats(s);
      out << split_name(s) << ',' << st.triples << ',' << st.entities_seen << ','
          << st.relations_seen << '\n';
      total += st.triples;
    }
    out << "all," << total << ',' << store.num_entities() << ','
        << store.vocab().num_base_relations() << '\n';
  }

  if (a.top_entities > 0) {
    if (a.out_dir.empty()) throw UsageError("--top-entities needs --out-dir");
    const auto sub = top_degree_subgraph(store, a.top_entities);
    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path out(a.out_dir);
    write_triples(out / "train.txt", sub.train);
    write_triples(out / "valid.txt", sub.valid);
    write_triples(out / "test.txt", sub.test);
    std::cerr << "wrote top-" << a.top_entities << " subgraph to " << a.out_dir << ": "
              << sub.train.size() << " train, " << sub.valid.size() << " valid, "
              << sub.test.size() << " test triples\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SEArgs {
  std::string data_dir;
  std::string split = "test";
  std::string paths = "directed";
  std::string out;
  bool allow_unseen = false;
};

int run_se_metrics(const SEArgs& a) {
  PathMode mode;
  if (a.paths == "directed") {
    mode = PathMode::directed;
  } else if (a.paths == "augmented") {
    mode = PathMode::augmented;
  } else {
    throw UsageError("--paths must be directed or augmented");
  }
  const auto split = parse_split(a.split);
  const auto store = TripleStore::ingest(a.data_dir, ingest_options(a.allow_unseen));
  const auto queries = build_query_set(store, split);
  const auto scores = SEMetrics(store, mode).score_all(queries);
  Sink sink(a.out);
  write_se_csv(sink.stream(), queries, scores, store.vocab());
  std::cerr << "scored " << queries.size() << " " << a.split << " queries\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out;
  std::string log;
  std::string dtype = "f32";
  std::optional<int> threads;
  bool quiet = false;
  std::vector<std::string> overrides;
};

void apply_overrides(Config& config, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string key = args[i];
    if (!key.starts_with("--")) throw UsageError("unexpected argument '" + key + "'");
    key = key.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw UsageError("--" + key + " needs a value");
      value = args[++i];
    }
    for (auto& ch : key) {
      if (ch == '-') ch = '_';
    }
    config.set(key, value);
  }
}

template <typename T>
int train_as(const TrainConfig& config, const TripleStore& store, const std::string& out,
             const std::string& log_path, bool quiet) {
  SeGnnModel<T> model(config, store.num_entities(), store.num_relations());
  std::filesystem::create_directories(out);
  const auto log_file = log_path.empty() ? std::filesystem::path(out) / "train_log.csv"
                                         : std::filesystem::path(log_path);
  std::ofstream log(log_file);
  if (!log) throw DataError("cannot write " + log_file.string());
  FitOptions options;
  options.out_dir = out;
  options.log = &log;
  options.progress = quiet ? nullptr : &std::cerr;
  const auto result = fit(model, store, config, options);
  std::cout << "best_epoch,best_valid_mrr,epochs_run,evaluations\n"
            << result.best_epoch << ',' << format_number(result.best_valid_mrr) << ','
            << result.epochs_run << ',' << result.evaluations << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  Config config = a.config_path.empty() ? Config{} : Config::from_file(a.config_path);
  apply_overrides(config, a.overrides);
  if (!a.data_dir.empty()) config.set("data_dir", a.data_dir);
  if (a.threads) config.set("threads", std::to_string(*a.threads));
  const auto tc = TrainConfig::from_config(config);
  std::string out = a.out;
  if (out.empty()) out = config.get("out_dir").value_or("");
  if (out.empty()) throw UsageError("train needs --out or out_dir");
  if (tc.data_dir.empty()) throw UsageError("train needs --data-dir or data_dir");
  set_threads(static_cast<int>(tc.threads));
  const auto store = TripleStore::ingest(tc.data_dir, ingest_options(tc.allow_unseen));
  if (a.dtype == "f32") return train_as<float>(tc, store, out, a.log, a.quiet);
  if (a.dtype == "f64") return train_as<double>(tc, store, out, a.log, a.quiet);
  throw UsageError("--dtype must be f32 or f64");
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string split = "test";
  std::string data_dir;
  std::string ranks;
  double tie_epsilon = 0;
  std::size_t batch_size = 0;
  int threads = 1;
};

template <typename T>
int eval_as(const EvalArgs& a, const TripleStore& store, Split split, std::size_t batch) {
  auto model = load_checkpoint<T>(a.checkpoint, store.vocab());
  const auto records = rank_queries(model, store, split, {batch, a.tie_epsilon});
  const auto ranks_path = a.ranks.empty()
                              ? std::filesystem::path(a.checkpoint) /
                                    ("ranks_" + std::string(split_name(split)) + ".csv")
                              : std::filesystem::path(a.ranks);
  std::ofstream ranks(ranks_path);
  if (!ranks) throw DataError("cannot write " + ranks_path.string());
  write_ranks_csv(ranks, records, store.vocab());
  print_metrics(std::cout, compute_metrics(records));
  std::cerr << "ranks written to " << ranks_path.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  set_threads(a.threads);
  if (a.tie_epsilon < 0) throw UsageError("--tie-epsilon must be non-negative");
  const auto split = parse_split(a.split);
  const auto info = read_manifest(a.checkpoint);
  const auto data_dir = a.data_dir.empty() ? info.config.data_dir : a.data_dir;
  if (data_dir.empty()) throw UsageError("eval needs --data-dir (none recorded in the checkpoint)");
  const auto store = TripleStore::ingest(data_dir, ingest_options(info.config.allow_unseen));
  check_vocab(info, store.vocab());
  const std::size_t batch = a.batch_size ? a.batch_size : info.config.eval_batch_size;
  if (info.dtype == DType::f64) return eval_as<double>(a, store, split, batch);
  return eval_as<float>(a, store, split, batch);
}

// ---------------------------------------------------------------------------

struct BucketArgs {
  std::string ranks;
  std::string se;
  std::string mode = "three_even";
  std::string out;
};

int run_bucket_report(const BucketArgs& a) {
  const auto mode = parse_bucket_mode(a.mode);
  const auto ranks = read_ranks_csv(a.ranks);
  const auto se = read_se_csv(a.se);
  const auto rows = bucket_report(ranks, se, mode);
  Sink sink(a.out);
  write_bucket_csv(sink.stream(), rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef M_MMAP_THRESHOLD
  // Every training step allocates and frees the same large activation
  // buffers; keep them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Semantic-evidence knowledge graph embedding toolkit"};
  app.name("se-kge");
  app.require_subcommand(1);
  app.footer("\n" + config_help());

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Read a dataset and report statistics");
  c_ingest->add_option("--data-dir", ingest.data_dir, "Directory with train/valid/test.txt")
      ->required();
  c_ingest->add_flag("--stats", ingest.stats, "Print per-split counts as CSV");
  c_ingest->add_flag("--allow-unseen", ingest.allow_unseen,
                     "Keep valid/test triples with entities absent from train");
  c_ingest->add_option("--top-entities", ingest.top_entities,
                       "Write the subgraph induced by the N highest-degree entities");
  c_ingest->add_option("--out-dir", ingest.out_dir, "Destination of the induced subgraph");

  SEArgs se;
  auto* c_se = app.add_subcommand("se-metrics", "Compute semantic-evidence scores per query");
  c_se->add_option("--data-dir", se.data_dir, "Directory with train/valid/test.txt")->required();
  c_se->add_option("--split", se.split, "Split to score")->capture_default_str();
  c_se->add_option("--paths", se.paths, "Path mode: directed | augmented")->capture_default_str();
  c_se->add_option("--out", se.out, "Output CSV (default: stdout)");
  c_se->add_flag("--allow-unseen", se.allow_unseen,
                 "Keep valid/test triples with entities absent from train");
  int se_threads = 1;
  c_se->add_option("--threads", se_threads, "Worker threads")->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train with early stopping and checkpointing");
  c_train->add_option("--config", train.config_path, "key=value config file");
  c_train->add_option("--data-dir", train.data_dir, "Overrides data_dir");
  c_train->add_option("--out", train.out, "Checkpoint directory (overrides out_dir)");
  c_train->add_option("--log", train.log, "Training log CSV (default: <out>/train_log.csv)");
  c_train->add_option("--dtype", train.dtype, "Parameter precision: f32 | f64")
      ->capture_default_str();
  c_train->add_option("--threads", train.threads, "Worker threads (overrides threads)");
  c_train->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");
  c_train->allow_extras();
  c_train->footer("Any config key may be given as --key value.\n\n" + config_help());

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Filtered ranking evaluation of a checkpoint");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  c_eval->add_option("--split", eval.split, "valid | test")->capture_default_str();
  c_eval->add_option("--data-dir", eval.data_dir, "Overrides the recorded data_dir");
  c_eval->add_option("--ranks", eval.ranks, "Rank CSV (default: <checkpoint>/ranks_<split>.csv)");
  c_eval->add_option("--tie-epsilon", eval.tie_epsilon, "Score tolerance for ties")
      ->capture_default_str();
  c_eval->add_option("--batch-size", eval.batch_size, "Queries per batch (default: config)");
  c_eval->add_option("--threads", eval.threads, "Worker threads")->capture_default_str();

  BucketArgs bucket;
  auto* c_bucket = app.add_subcommand("bucket-report", "Mean rank per evidence bucket");
  c_bucket->add_option("--ranks", bucket.ranks, "Rank CSV")->required();
  c_bucket->add_option("--se", bucket.se, "Evidence CSV from se-metrics")->required();
  c_bucket->add_option("--mode", bucket.mode, "three_even | two_zero_split")
      ->capture_default_str();
  c_bucket->add_option("--out", bucket.out, "Output CSV (default: stdout)");

  if (argc < 2) {
    std::cerr << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_ingest) return run_ingest(ingest);
    if (*c_se) {
      set_threads(se_threads);
      return run_se_metrics(se);
    }
    if (*c_train) {
      train.overrides = c_train->remaining();
      return run_train(train);
    }
    if (*c_eval) return run_eval(eval);
    if (*c_bucket) return run_bucket_report(bucket);
  } catch (const UsageError& e) {
    std::cerr << "se-kge: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "se-kge: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
