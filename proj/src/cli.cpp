#include "pyrseg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "pyrseg/config.hpp"
#include "pyrseg/error.hpp"
#include "pyrseg/gradcheck.hpp"
#include "pyrseg/trainer.hpp"

namespace pyrseg::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out_dir = "run";
  std::string checkpoint;
  std::string split = "test";
  std::string input;
  std::string output;
};

RunConfig resolve(const Options& o, bool seed_is_data_seed) {
  KeyValues kv;
  if (!o.config_path.empty()) kv = load_key_values(o.config_path);
  for (const auto& item : o.overrides) {
    auto [key, value] = parse_key_value_line(item);
    kv[key] = value;
  }
  RunConfig rc;
  apply_key_values(rc, kv);
  if (o.seed) (seed_is_data_seed ? rc.data.seed : rc.train.seed) = *o.seed;
  return rc;
}

void log_config(std::ostream& out, const RunConfig& rc) {
  out << "# resolved config\n";
  write_key_values(out, to_key_values(rc));
  out << std::flush;
}

void save_config(const std::string& dir, const RunConfig& rc) {
  std::ofstream f(fs::path(dir) / "config.txt");
  if (!f) throw IoError("cannot write " + (fs::path(dir) / "config.txt").string());
  write_key_values(f, to_key_values(rc));
}

// The model must match the corpus resolution, which must survive three
// halvings for the mask pyramid.
void check_training_config(RunConfig& rc) {
  if (rc.data.size % 8 != 0) {
    throw ConfigError("data.size must be divisible by 8, got " + std::to_string(rc.data.size));
  }
  rc.train.model.input_size = rc.data.size;
  rc.train.validate();
}

Corpus open_corpus(const RunConfig& rc) {
  Corpus corpus = load_corpus(rc.data.root);
  if (corpus.size != rc.data.size) {
    throw ConfigError("corpus at " + rc.data.root + " has size " + std::to_string(corpus.size) +
                      " but data.size is " + std::to_string(rc.data.size));
  }
  return corpus;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void print_metrics(std::ostream& out, const std::string& label, const Metrics& m) {
  char line[128];
  std::snprintf(line, sizeof line, "%s iou %.2f dice %.2f samples %zu\n", label.c_str(), m.iou,
                m.dice, m.samples);
  out << line;
  for (const auto& [family, v] : m.per_family) {
    std::snprintf(line, sizeof line, "  %s iou %.2f dice %.2f\n", to_string(family).c_str(),
                  v.first, v.second);
    out << line;
  }
}

int cmd_gen_corpus(const Options& o, std::ostream& out) {
  RunConfig rc = resolve(o, true);
  rc.data.validate();
  log_config(out, rc);
  const Corpus c = generate_corpus(rc.data);
  out << "wrote " << c.entries.size() << " samples to " << c.root << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig rc = resolve(o, false);
  check_training_config(rc);
  log_config(out, rc);
  const Corpus corpus = open_corpus(rc);
  const Dataset train_set = load_split(corpus, "train");
  const Dataset val = load_split(corpus, "val");
  const TrainResult r = train_with_protocol(rc.train, train_set, val, &out);
  make_dir(o.out_dir);
  save_config(o.out_dir, rc);
  std::ofstream csv(fs::path(o.out_dir) / "metrics.csv");
  write_metrics_csv(csv, r.log);
  if (!csv) throw IoError("cannot write metrics.csv in " + o.out_dir);
  r.model.save((fs::path(o.out_dir) / "checkpoint").string());
  out << "best epoch " << r.best_epoch << " lr0 " << r.lr0 << '\n';
  out << "params " << r.model.parameter_count() << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  RunConfig rc = resolve(o, false);
  if (o.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  log_config(out, rc);
  const Model model = Model::load(o.checkpoint);
  rc.data.size = model.config().input_size;
  const Corpus corpus = open_corpus(rc);
  const Dataset data = load_split(corpus, o.split);
  print_metrics(out, o.split, evaluate(model, data));
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  RunConfig rc = resolve(o, false);
  check_training_config(rc);
  log_config(out, rc);
  const Corpus corpus = open_corpus(rc);
  const auto rows = ablation_grid(rc.train, load_split(corpus, "train"), load_split(corpus, "val"),
                                  load_split(corpus, "test"), ablation_rows(), &out);
  make_dir(o.out_dir);
  save_config(o.out_dir, rc);
  std::ofstream csv(fs::path(o.out_dir) / "ablation.csv");
  write_ablation_csv(csv, rows);
  if (!csv) throw IoError("cannot write ablation.csv in " + o.out_dir);
  write_ablation_csv(out, rows);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(1);
  out << "# resolved config\nseed = " << seed << '\n';
  bool ok = true;
  char line[128];
  for (const auto& r : gradcheck_suite(seed)) {
    std::snprintf(line, sizeof line, "%-24s cases %2d worst_rel_err %.3e %s\n", r.op.c_str(),
                  r.cases, r.worst_error, r.passed ? "ok" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

// Multiclass masks keep their class index as the gray level.
void write_class_pgm(const std::string& path, const Tensor& mask) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  const Shape s = mask.shape();
  f << "P5\n" << s.w << ' ' << s.h << "\n255\n";
  for (float v : mask.data()) f.put(static_cast<char>(static_cast<unsigned char>(v)));
  if (!f) throw IoError("failed writing " + path);
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.input.empty() || o.output.empty()) {
    throw ConfigError("predict requires --checkpoint, --input and --output");
  }
  out << "# resolved config\ncheckpoint = " << o.checkpoint << "\ninput = " << o.input
      << "\noutput = " << o.output << '\n';
  const Model model = Model::load(o.checkpoint);
  const Tensor image = read_ppm(o.input);
  const int size = model.config().input_size;
  const Shape s = image.shape();
  Tensor resized = image;
  if (s.h != size || s.w != size) resized = upsample_to(image, size, size, UpsampleMode::bilinear);
  Tensor mask = predict_mask(resized, model);
  if (s.h != size || s.w != size) mask = upsample_to(mask, s.h, s.w, UpsampleMode::nearest);
  if (model.config().num_classes > 1) {
    write_class_pgm(o.output, mask);
  } else {
    write_pgm(o.output, mask);
  }
  out << "wrote " << s.h << "x" << s.w << " mask to " << o.output << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pyramid segmentation network: data, training and checks"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_options;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file");
    seed_options.push_back(sub->add_option("--seed", seed, "seed override"));
    sub->add_option("overrides", o.overrides, "key=value overrides");
  };
  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train one model and save the best checkpoint");
  add_common(tr);
  tr->add_option("--out", o.out_dir, "output directory");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  add_common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  ev->add_option("--split", o.split, "train, val or test");
  auto* ab = app.add_subcommand("ablate", "run the five-row module ablation");
  add_common(ab);
  ab->add_option("--out", o.out_dir, "output directory");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
  add_common(gc);
  auto* pr = app.add_subcommand("predict", "segment one PPM image into a PGM mask");
  add_common(pr);
  pr->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  pr->add_option("--input", o.input, "input PPM");
  pr->add_option("--output", o.output, "output PGM");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  }
  for (const auto* opt : seed_options) {
    if (opt->count() > 0) o.seed = seed;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ab->parsed()) return cmd_ablate(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
    if (pr->parsed()) return cmd_predict(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace pyrseg::cli
