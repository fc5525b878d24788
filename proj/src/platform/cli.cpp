#include "toxtrans/platform/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "toxtrans/error.hpp"
#include "toxtrans/platform/server.hpp"
#include "toxtrans/platform/service.hpp"
#include "toxtrans/platform/workspace.hpp"

namespace toxtrans::platform {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string data_dir = "data";
  bool json_output = false;

  std::string path;
  std::string name;
  std::string corpus;
  std::string language;
  std::string translators;
  std::string backends;
  std::string embedder;
  std::string file;
  std::string out_file;
  std::string annotators;
  std::string config;
  std::string run_id;
  std::string format = "md";
  std::string host = "127.0.0.1";
  std::string token_env = "TOXTRANS_TOKEN";
  bool insecure = false;
  int n = 20;
  std::uint64_t seed = 0;
  int port = 8080;
  std::size_t max_pool = kDefaultPoolMax;
  std::size_t workers = 4;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(fmt::format("{} line {}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

class Cli {
 public:
  Cli(Options o, std::ostream& out) : o_(std::move(o)), out_(out) {}

  Workspace& ws() {
    if (!ws_) ws_ = std::make_unique<Workspace>(o_.data_dir);
    return *ws_;
  }

  std::string language() {
    if (!o_.language.empty()) {
      if (!ws().has_language(o_.language)) throw Error("language " + o_.language + " is not configured");
      return o_.language;
    }
    if (ws().config().languages.size() == 1) return ws().config().languages.front();
    throw Error("--language is required");
  }

  std::string corpus_name() {
    if (!o_.corpus.empty()) return o_.corpus;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(ws().layout().corpus())) {
      if (e.path().extension() == ".jsonl") names.push_back(e.path().stem().string());
    }
    if (names.size() == 1) return names.front();
    throw Error("--corpus is required (" + std::to_string(names.size()) + " corpora in " +
                ws().layout().corpus().string() + ")");
  }

  std::optional<fs::path> backends_path() const {
    if (o_.backends.empty()) return std::nullopt;
    return fs::path(o_.backends);
  }

  void emit(const json& j, const std::string& text) {
    if (o_.json_output) {
      out_ << j.dump(2) << "\n";
    } else {
      out_ << text;
    }
  }

  void corpus_import() {
    const auto c = ws().import_corpus(o_.path, o_.name);
    std::size_t benign = 0;
    for (const auto& s : c.sentences) benign += s.toxicity == Toxicity::benign ? 1 : 0;
    const auto harmful = c.sentences.size() - benign;
    emit({{"name", c.name},
          {"sentences", c.sentences.size()},
          {"benign", benign},
          {"harmful", harmful},
          {"checksum", c.checksum}},
         fmt::format("imported {} ({} sentences: {} benign, {} harmful)\nchecksum {}\n", c.name,
                     c.sentences.size(), benign, harmful, c.checksum));
  }

  void corpus_sample() {
    const auto c = ws().load_corpus(corpus_name());
    Corpus sample{o_.name, sample_balanced(c, o_.n, o_.seed), {}};
    sample.checksum = corpus_checksum(sample.sentences);
    if (!o_.name.empty()) atomic_write(ws().corpus_path(o_.name), serialize_corpus(sample));
    json ids = json::array();
    for (const auto& s : sample.sentences) ids.push_back(s);
    std::string text = serialize_corpus(sample);
    if (!o_.name.empty()) text += fmt::format("saved as corpus {}\n", o_.name);
    emit({{"corpus", c.name}, {"seed", o_.seed}, {"saved_as", o_.name}, {"sentences", ids}}, text);
  }

  json round_summary(const RoundState& r) {
    auto sentences = json::array();
    for (const auto& t : r.tasks) {
      sentences.push_back({{"sentence_id", t.sentence.id},
                           {"candidates", t.candidates.size()},
                           {"degraded", t.degraded},
                           {"tie_broken", t.tie_broken}});
    }
    return {{"round", r.round_number},
            {"status", to_string(r.status)},
            {"sentences", sentences},
            {"warnings", r.warnings}};
  }

  std::string round_text(const RoundState& r) {
    std::string text = fmt::format("round {} {} ({} sentences)\n", r.round_number, to_string(r.status),
                                   r.tasks.size());
    for (const auto& t : r.tasks) {
      text += fmt::format("  {}  {} candidates{}{}\n", t.sentence.id, t.candidates.size(),
                          t.degraded ? "  degraded" : "", t.tie_broken ? "  tie broken" : "");
    }
    for (const auto& w : r.warnings) text += "warning: " + w + "\n";
    return text;
  }

  void round_start() {
    const auto lang = language();
    const auto corpus = ws().load_corpus(corpus_name());
    auto gateway = ws().make_gateway(ws().backend_configs(backends_path()), o_.seed);
    std::vector<BackendId> translators;
    for (const auto& t : split_list(o_.translators)) translators.push_back({t, BackendKind::translator});
    const auto r = ws().campaign(lang).start_round1(corpus.sentences, translators, *gateway, o_.workers);
    auto j = round_summary(r);
    j["language"] = lang;
    emit(j, round_text(r));
  }

  void round_close() {
    const auto lang = language();
    auto& campaign = ws().campaign(lang);
    const auto current = campaign.current_round();
    if (!current || current->status != RoundStatus::open) throw Error("no open round for " + lang);
    if (current->round_number == 3) {
      const auto finals = campaign.close_round3();
      std::string text = "round 3 closed; adopted translations:\n";
      for (const auto& f : finals) {
        text += fmt::format("  {}  {} ({} votes{})  {}\n", f.sentence_id, f.winner.id, f.vote_count,
                            f.tie_broken ? ", tie broken" : "", f.winner.text);
      }
      emit({{"language", lang}, {"closed", 3}, {"finals", finals}}, text);
      return;
    }
    const auto next = current->round_number == 1 ? campaign.close_round1() : campaign.close_round2();
    auto j = round_summary(next);
    j["language"] = lang;
    j["closed"] = current->round_number;
    emit(j, fmt::format("round {} closed\n", current->round_number) + round_text(next));
  }

  void round_status() {
    const auto lang = language();
    auto& campaign = ws().campaign(lang);
    const auto p = campaign.progress();
    if (!p) {
      emit({{"language", lang}, {"round", nullptr}}, "no rounds started for " + lang + "\n");
      return;
    }
    std::string text = fmt::format("{} round {} {} ({} annotators voted)\n", lang, p->round,
                                   to_string(p->status), p->annotators);
    for (const auto& s : p->sentences) text += fmt::format("  {}  {} votes\n", s.sentence_id, s.votes);
    if (campaign.finished()) text += "campaign finished\n";
    emit({{"language", lang}, {"round", *p}, {"finished", campaign.finished()}}, text);
  }

  void round_export() {
    const auto lines = ws().campaign(language()).export_round();
    if (o_.out_file.empty()) {
      out_ << lines;
      return;
    }
    atomic_write(o_.out_file, lines);
    emit({{"written", o_.out_file}}, "wrote " + o_.out_file + "\n");
  }

  void round_import_votes() {
    const auto lang = language();
    auto& campaign = ws().campaign(lang);
    std::size_t accepted = 0;
    for (const auto& j : read_jsonl(o_.file)) {
      campaign.submit_vote(j.get<Vote>());
      ++accepted;
    }
    emit({{"language", lang}, {"accepted", accepted}}, fmt::format("accepted {} votes\n", accepted));
  }

  void ratings_open() {
    const auto lang = language();
    std::vector<RatingItem> items;
    for (const auto& j : read_jsonl(o_.file)) items.push_back(j.get<RatingItem>());
    ws().campaign(lang).open_ratings(items, split_list(o_.annotators));
    emit({{"language", lang}, {"items", items.size()}},
         fmt::format("rating campaign open for {} with {} items\n", lang, items.size()));
  }

  void ratings_import() {
    const auto lang = language();
    auto& campaign = ws().campaign(lang);
    std::size_t accepted = 0;
    for (const auto& j : read_jsonl(o_.file)) {
      campaign.submit_rating(j.get<Rating>());
      ++accepted;
    }
    emit({{"language", lang}, {"accepted", accepted}}, fmt::format("accepted {} ratings\n", accepted));
  }

  void pool_build() {
    const auto lang = language();
    auto& campaign = ws().campaign(lang);
    if (!campaign.finished()) throw Error("the " + lang + " campaign has not finished round 3");
    const auto rounds = campaign.rounds();
    std::vector<SourceSentence> curated;
    for (const auto& t : rounds.front().tasks) curated.push_back(t.sentence);
    const auto finals = campaign.finals();
    std::unique_ptr<Gateway> gateway;
    std::optional<BackendId> embedder;
    if (!o_.embedder.empty()) {
      gateway = ws().make_gateway(ws().backend_configs(backends_path()));
      embedder = BackendId{o_.embedder, BackendKind::embedder};
    }
    const auto pool = build_pool(curated, finals, lang, gateway.get(), embedder ? &*embedder : nullptr, o_.max_pool);
    ws().save_pool(pool);
    emit({{"language", lang},
          {"path", ws().pool_path(lang).string()},
          {"examples", pool.examples.size()},
          {"llm_retained", pool.llm_retained()},
          {"hash", pool_hash(pool)}},
         fmt::format("{} pool: {} examples ({} model-origin), saved to {}\n", lang, pool.examples.size(),
                     pool.llm_retained(), ws().pool_path(lang).string()));
  }

  void pool_show() {
    const auto lang = language();
    const auto pool = ws().load_pool(lang);
    if (!pool) throw Error("no pool for " + lang + "; run `pool build` first");
    std::string text;
    for (const auto& e : pool->examples) {
      text += fmt::format("{}  [{}:{}]\n  {}\n  {}\n", e.source.id, e.origin.kind == OriginKind::llm ? "llm" : "custom",
                          e.origin.name, e.source.text, e.translation);
    }
    emit({{"language", lang}, {"examples", pool->examples}, {"hash", pool_hash(*pool)}}, text);
  }

  void bench_run() {
    auto setup = load_bench_setup(ws(), o_.config);
    const auto run_id = o_.run_id.empty() ? new_run_id(o_.config) : o_.run_id;
    if (ws().runs().exists(run_id)) throw Error("run " + run_id + " already exists");
    const auto matrix = run_grid(setup.config, *setup.gateway, run_id);
    const auto manifest = make_manifest(setup.config, matrix, *setup.gateway, utc_timestamp());
    save_run(ws().runs(), manifest, matrix);
    std::string text = render_report(matrix, ReportFormat::markdown);
    for (const auto& w : matrix.warnings) text += "warning: " + w + "\n";
    text += "run " + run_id + "\n";
    emit({{"run_id", run_id}, {"matrix", matrix}}, text);
  }

  void bench_sweep() {
    auto setup = load_bench_setup(ws(), o_.config);
    const auto run_id = o_.run_id.empty() ? new_run_id(o_.config + "#sweep") : o_.run_id;
    if (ws().runs().exists(run_id)) throw Error("run " + run_id + " already exists");
    const auto sweep = sweep_k(setup.config, *setup.gateway);
    RunManifest manifest;
    manifest.run_id = run_id;
    manifest.timestamp = utc_timestamp();
    manifest.config = config_snapshot(setup.config);
    manifest.config["kind"] = "sweep-k";
    manifest.template_hash = setup.config.registry().hash(setup.config.template_id);
    for (const auto& [lang, pool] : setup.config.pools) manifest.pool_hashes[lang] = pool_hash(pool);
    manifest.corpus_checksum = setup.config.corpus_checksum;
    manifest.seed = setup.config.seed;
    manifest.backends = setup.gateway->describe();
    manifest.notes = {{"tie_rule", "equal means resolve to the smaller k"}};
    ws().runs().write(manifest, {{"sweep.json", json(sweep).dump(2) + "\n"},
                                 {"report.md", render_sweep(sweep, ReportFormat::markdown)}});
    std::string text = render_sweep(sweep, ReportFormat::markdown);
    for (const auto& [lang, k] : sweep.argmax) text += fmt::format("best k for {}: {}\n", lang, k);
    for (const auto& w : sweep.warnings) text += "warning: " + w + "\n";
    text += "run " + run_id + "\n";
    emit({{"run_id", run_id}, {"sweep", sweep}}, text);
  }

  void bench_report() {
    const auto format = parse_report_format(o_.format);
    auto& runs = ws().runs();
    if (!runs.exists(o_.run_id)) throw Error("no run " + o_.run_id);
    try {
      const auto matrix = parse_matrix(runs.read_artifact(o_.run_id, "matrix.json"));
      out_ << render_report(matrix, format);
    } catch (const Error&) {
      const auto sweep_text = runs.read_artifact(o_.run_id, "sweep.json");
      const auto j = json::parse(sweep_text);
      if (format == ReportFormat::json) {
        out_ << j.dump(2) << "\n";
      } else {
        out_ << runs.read_artifact(o_.run_id, "report.md");
      }
    }
  }

  void stats_annotation() {
    const auto lang = language();
    const auto r = ws().campaign(lang).statistics();
    const auto pct = [](const std::optional<double>& v) { return v ? format_percent(*v) : std::string("–"); };
    std::string text = fmt::format("{}: {} sentences\n", lang, r.sentences);
    text += fmt::format("custom submissions: {} ({:.2f} per sentence)\n", r.custom_submissions,
                        r.mean_custom_per_sentence);
    text += fmt::format("Jaccard R1/R2/R3: {} / {} / {}\n", pct(r.agreement[0]), pct(r.agreement[1]),
                        pct(r.agreement[2]));
    text += fmt::format("finals: {} ({} model-origin, {} custom)\n", r.finals_total, r.finals_llm,
                        r.finals_custom);
    if (r.overlap) {
      text += fmt::format("substring overlap vs round-1 candidates: each {} mean / {} median, nearest {} mean / {} median\n",
                          format_percent(r.overlap->each_mean), format_percent(r.overlap->each_median),
                          format_percent(r.overlap->nearest_mean), format_percent(r.overlap->nearest_median));
    }
    for (const auto& w : r.warnings) text += "warning: " + w + "\n";
    emit(json(r), text);
  }

  void stats_ratings() {
    std::vector<std::string> langs;
    if (!o_.language.empty()) {
      langs.push_back(language());
    } else {
      langs = ws().config().languages;
    }
    std::vector<RatingRecord> records;
    for (const auto& l : langs) {
      const auto part = ws().campaign(l).rating_records();
      records.insert(records.end(), part.begin(), part.end());
    }
    const auto rows = mean_ratings(records, RatingGrouping::language);
    const auto per_annotator = mean_ratings(records, RatingGrouping::language_and_annotator);
    const auto to_rows = [](const std::vector<RatingSummary>& v) {
      auto out = json::array();
      for (const auto& s : v) {
        json row{{"language", s.language}, {"set", s.set}, {"mean", s.mean}, {"count", s.count}};
        if (s.annotator) row["annotator"] = *s.annotator;
        out.push_back(row);
      }
      return out;
    };
    std::string text = "| Language | Set | Mean | n |\n| --- | --- | :---: | :---: |\n";
    for (const auto& s : rows) text += fmt::format("| {} | {} | {:.2f} | {} |\n", s.language, s.set, s.mean, s.count);
    emit({{"by_language", to_rows(rows)}, {"by_annotator", to_rows(per_annotator)}}, text);
  }

  int serve() {
    std::optional<std::string> token;
    if (const char* v = std::getenv(o_.token_env.c_str()); v != nullptr && *v != '\0') {
      token = v;
    } else if (!o_.insecure) {
      throw Error("environment variable " + o_.token_env + " is not set (use --insecure to run without a token)");
    }
    AnnotationService service(ws(), token);
    ApiServer server(service);
    const int port = server.bind(o_.host, o_.port);
    out_ << fmt::format("serving {} on http://{}:{}\n", ws().layout().root.string(), o_.host, port) << std::flush;
    server.listen();
    return 0;
  }

 private:
  Options o_;
  std::ostream& out_;
  std::unique_ptr<Workspace> ws_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Toxicity-preserving translation: curation rounds, few-shot pools and benchmarks"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--data-dir", o.data_dir, "Data directory")->capture_default_str();
  app.add_flag("--json", o.json_output, "Machine-readable output");

  auto* corpus = app.add_subcommand("corpus", "Import and sample source corpora")->require_subcommand(1);
  auto* corpus_import = corpus->add_subcommand("import", "Validate a JSONL corpus and store it");
  corpus_import->add_option("path", o.path, "Corpus file")->required();
  corpus_import->add_option("--name", o.name, "Stored name (default: file stem)");
  auto* corpus_sample = corpus->add_subcommand("sample", "Balanced benign/harmful sample");
  corpus_sample->add_option("--n", o.n, "Sample size (even)")->capture_default_str();
  corpus_sample->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  corpus_sample->add_option("--corpus", o.corpus, "Corpus to sample from");
  corpus_sample->add_option("--out", o.name, "Store the sample as a corpus with this name");

  auto* round = app.add_subcommand("round", "Curation rounds")->require_subcommand(1);
  auto* round_start = round->add_subcommand("start", "Generate candidates and open round 1");
  round_start->add_option("--language", o.language);
  round_start->add_option("--corpus", o.corpus, "Sentences to curate");
  round_start->add_option("--translators", o.translators, "Three translator backends, comma separated")->required();
  round_start->add_option("--backends", o.backends, "Backend config file");
  round_start->add_option("--workers", o.workers)->capture_default_str();
  round_start->add_option("--seed", o.seed)->capture_default_str();
  auto* round_close = round->add_subcommand("close", "Close the open round");
  round_close->add_option("--language", o.language);
  auto* round_status = round->add_subcommand("status", "Open round and vote progress");
  round_status->add_option("--language", o.language);
  auto* round_export = round->add_subcommand("export", "Tasks of the current round as JSONL");
  round_export->add_option("--language", o.language);
  round_export->add_option("--out", o.out_file, "Write to a file instead of stdout");
  auto* round_import = round->add_subcommand("import-votes", "Submit votes from a JSONL file");
  round_import->add_option("--language", o.language);
  round_import->add_option("file", o.file)->required();

  auto* ratings = app.add_subcommand("ratings", "1-5 rating campaign")->require_subcommand(1);
  auto* ratings_open = ratings->add_subcommand("open", "Open a rating campaign from a JSONL item file");
  ratings_open->add_option("--language", o.language);
  ratings_open->add_option("--items", o.file)->required();
  ratings_open->add_option("--annotators", o.annotators, "Allowed annotators, comma separated");
  auto* ratings_import = ratings->add_subcommand("import", "Submit ratings from a JSONL file");
  ratings_import->add_option("--language", o.language);
  ratings_import->add_option("file", o.file)->required();

  auto* pool = app.add_subcommand("pool", "Few-shot pools")->require_subcommand(1);
  auto* pool_build = pool->add_subcommand("build", "Build a pool from the adopted translations");
  pool_build->add_option("--language", o.language);
  pool_build->add_option("--embedder", o.embedder, "Precompute source embeddings with this backend");
  pool_build->add_option("--backends", o.backends);
  pool_build->add_option("--max", o.max_pool)->capture_default_str();
  auto* pool_show = pool->add_subcommand("show", "Print a pool");
  pool_show->add_option("--language", o.language);

  auto* bench = app.add_subcommand("bench", "Benchmarks")->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "Score every translator on every language");
  bench_run->add_option("--config", o.config)->required();
  bench_run->add_option("--run-id", o.run_id);
  auto* bench_sweep = bench->add_subcommand("sweep-k", "Direct similarity against the number of examples");
  bench_sweep->add_option("--config", o.config)->required();
  bench_sweep->add_option("--run-id", o.run_id);
  auto* bench_report = bench->add_subcommand("report", "Render a stored run");
  bench_report->add_option("--run", o.run_id)->required();
  bench_report->add_option("--format", o.format, "md, csv or json")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Campaign statistics")->require_subcommand(1);
  auto* stats_annotation = stats->add_subcommand("annotation", "Customs, agreement, retention");
  stats_annotation->add_option("--language", o.language);
  auto* stats_ratings = stats->add_subcommand("ratings", "Mean ratings per language and set");
  stats_ratings->add_option("--language", o.language);

  auto* serve = app.add_subcommand("serve", "Run the annotation API");
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--token-env", o.token_env, "Environment variable holding the shared token")
      ->capture_default_str();
  serve->add_flag("--insecure", o.insecure, "Accept requests without a token");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("toxtrans");
  // Name an unknown command outright rather than reporting a missing one.
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--data-dir") {
      ++i;
      continue;
    }
    if (a.starts_with("-")) continue;
    if (app.get_subcommand_no_throw(a) == nullptr) {
      err << "error: unknown command '" << a << "'\n\n" << app.help();
      return 2;
    }
    break;
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  Cli cli(o, out);
  try {
    if (corpus_import->parsed()) cli.corpus_import();
    else if (corpus_sample->parsed()) cli.corpus_sample();
    else if (round_start->parsed()) cli.round_start();
    else if (round_close->parsed()) cli.round_close();
    else if (round_status->parsed()) cli.round_status();
    else if (round_export->parsed()) cli.round_export();
    else if (round_import->parsed()) cli.round_import_votes();
    else if (ratings_open->parsed()) cli.ratings_open();
    else if (ratings_import->parsed()) cli.ratings_import();
    else if (pool_build->parsed()) cli.pool_build();
    else if (pool_show->parsed()) cli.pool_show();
    else if (bench_run->parsed()) cli.bench_run();
    else if (bench_sweep->parsed()) cli.bench_sweep();
    else if (bench_report->parsed()) cli.bench_report();
    else if (stats_annotation->parsed()) cli.stats_annotation();
    else if (stats_ratings->parsed()) cli.stats_ratings();
    else if (serve->parsed()) return cli.serve();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace toxtrans::platform
