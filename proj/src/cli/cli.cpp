#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "tolcal/calibrators.hpp"
#include "tolcal/diagram.hpp"
#include "tolcal/distill.hpp"
#include "tolcal/elicit.hpp"
#include "tolcal/metrics.hpp"
#include "tolcal/proxies.hpp"
#include "tolcal/regress.hpp"
#include "tolcal/report.hpp"
#include "tolcal/synth.hpp"

namespace tolcal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  double epsilon = 10.0;
  int bins = 10;
  std::string scale = "unit";
  std::string format;  // empty: from the extension

  ToleranceConfig tolerance() const {
    ToleranceConfig cfg;
    cfg.epsilon = epsilon;
    cfg.num_bins = bins;
    cfg.validate();
    return cfg;
  }
  FileFormat format_for(const fs::path& path) const {
    return format.empty() ? format_from_path(path) : parse_file_format(format);
  }
  Dataset load(const fs::path& path) const { return load_dataset(path, format_for(path), parse_confidence_scale(scale)); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--epsilon,-e", c.epsilon, "Tolerance in score points")->capture_default_str();
  cmd->add_option("--bins,-m", c.bins, "Number of equal-width confidence bins")->capture_default_str();
  cmd->add_option("--scale", c.scale, "Confidence scale of input files")
      ->check(CLI::IsMember({"unit", "percent"}))
      ->capture_default_str();
  cmd->add_option("--format", c.format, "Input format (default: from extension)")->check(CLI::IsMember({"jsonl", "csv"}));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::invalid_input, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) fail(ErrorKind::transport, "write to '" + path.string() + "' failed");
}

// Prints the report to `out`, and to --output when given.
void emit(const json& doc, const std::string& output, std::ostream& out) {
  const auto text = doc.dump(2) + "\n";
  if (!output.empty()) write_text(output, text);
  out << text;
}

void save(const fs::path& path, const Dataset& dataset, const Common& c) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path, dataset, c.format_for(path), parse_confidence_scale(c.scale));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> to_double(const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ": line " + std::to_string(line); }

// group_key,value rows; a leading header row is skipped.
std::map<std::string, double> load_covariate(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path.string() + "'");
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) fail(ErrorKind::parse, where(path, line_no) + ": expected group_key,value");
    const auto value = to_double(cells[1]);
    if (!value) {
      if (line_no == 1 && out.empty()) continue;
      fail(ErrorKind::parse, where(path, line_no) + ": value '" + cells[1] + "' is not a number");
    }
    if (!out.emplace(cells[0], *value).second)
      fail(ErrorKind::parse, where(path, line_no) + ": duplicate group_key '" + cells[0] + "'");
  }
  if (out.empty()) fail(ErrorKind::empty_input, path.string() + ": no covariate rows");
  return out;
}

void save_covariate(const fs::path& path, const std::map<std::string, double>& covariate) {
  std::string text = "group_key,value\n";
  for (const auto& [key, value] : covariate) text += key + "," + format_number(value) + "\n";
  write_text(path, text);
}

// CSV "id,f1,...,fd" with a header row, or JSONL {"id": ..., "features": [...]}.
// Rows are returned in the dataset's record order.
std::vector<std::vector<double>> load_features(const fs::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path.string() + "'");
  std::unordered_map<std::string, std::vector<double>> by_id;
  std::string line;
  std::size_t line_no = 0;
  const bool csv = format_from_path(path) == FileFormat::csv;
  std::optional<std::size_t> width;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string id;
    std::vector<double> row;
    if (csv) {
      const auto cells = split_csv_line(line);
      if (line_no == 1) continue;
      if (cells.size() < 2) fail(ErrorKind::parse, where(path, line_no) + ": expected id and at least one feature");
      id = cells[0];
      for (std::size_t i = 1; i < cells.size(); ++i) {
        const auto v = to_double(cells[i]);
        if (!v) fail(ErrorKind::parse, where(path, line_no) + ": feature '" + cells[i] + "' is not a number");
        row.push_back(*v);
      }
    } else {
      try {
        const auto obj = json::parse(line);
        const auto& jid = obj.at("id");
        id = jid.is_string() ? jid.get<std::string>() : jid.dump();
        row = obj.at("features").get<std::vector<double>>();
      } catch (const json::exception& e) {
        fail(ErrorKind::parse, where(path, line_no) + ": " + e.what());
      }
    }
    if (!width) width = row.size();
    if (row.size() != *width)
      fail(ErrorKind::parse, where(path, line_no) + ": expected " + std::to_string(*width) + " features");
    if (!by_id.emplace(id, std::move(row)).second)
      fail(ErrorKind::parse, where(path, line_no) + ": duplicate id '" + id + "'");
  }
  std::vector<std::vector<double>> out;
  std::vector<std::string> missing;
  for (const auto& r : dataset) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) missing.push_back(r.id);
    else out.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 10) list += ", ...";
    fail(ErrorKind::missing_evidence,
         path.string() + ": no features for " + std::to_string(missing.size()) + " record(s): " + list);
  }
  return out;
}

void save_features(const fs::path& path, const Dataset& dataset, const std::vector<std::vector<double>>& features) {
  std::string text = "id";
  const auto d = features.empty() ? 0 : features.front().size();
  for (std::size_t j = 0; j < d; ++j) text += ",f" + std::to_string(j + 1);
  text += "\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    text += dataset[i].id;
    for (double v : features[i]) text += "," + format_number(v);
    text += "\n";
  }
  write_text(path, text);
}

double threshold_from_percent(double percent) {
  if (!std::isfinite(percent) || percent < 0.0 || percent > 100.0)
    fail(ErrorKind::invalid_input, "--threshold is on the 0-100 scale; got " + format_number(percent));
  return percent / 100.0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::auth:
    case ErrorKind::transport:
      return kRuntime;
    default:
      return kValidation;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tolerance-based calibration toolkit for continuous-score measurements", "tolcal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tolcal 0.1.0");

  // audit
  Common audit_c;
  std::string audit_input, audit_proxy, audit_diagram, audit_output;
  auto* audit = app.add_subcommand("audit", "T-ECE, Brier, rank correlation and reliability bins of a dataset");
  add_common(audit, audit_c);
  audit->add_option("--input,-i", audit_input, "Dataset (JSONL or CSV)")->required();
  audit->add_option("--proxy", audit_proxy, "Replace confidences with a proxy first")
      ->check(CLI::IsMember({"verbal", "resampling", "logit_geom", "p_true"}));
  audit->add_option("--diagram", audit_diagram, "Write a reliability diagram SVG here");
  audit->add_option("--output,-o", audit_output, "Also write the JSON report here");

  // diagram
  Common diag_c;
  std::string diag_input, diag_proxy, diag_output, diag_title;
  auto* diagram = app.add_subcommand("diagram", "Reliability diagram SVG of a dataset");
  add_common(diagram, diag_c);
  diagram->add_option("--input,-i", diag_input, "Dataset (JSONL or CSV)")->required();
  diagram->add_option("--proxy", diag_proxy, "Replace confidences with a proxy first")
      ->check(CLI::IsMember({"verbal", "resampling", "logit_geom", "p_true"}));
  diagram->add_option("--output,-o", diag_output, "SVG path")->required();
  diagram->add_option("--title", diag_title, "Diagram title");

  // calibrate
  Common cal_c;
  std::string cal_train, cal_test, cal_model_dir, cal_output, cal_apply, cal_input, cal_out;
  auto* calibrate = app.add_subcommand("calibrate", "Fit and compare Platt, Beta, isotonic and temperature calibrators");
  add_common(calibrate, cal_c);
  calibrate->add_option("--train", cal_train, "Training dataset");
  calibrate->add_option("--test", cal_test, "Evaluation dataset");
  calibrate->add_option("--model-dir", cal_model_dir, "Write <method>.json for every fitted calibrator");
  calibrate->add_option("--output,-o", cal_output, "Also write the comparison report here");
  calibrate->add_option("--apply", cal_apply, "Apply a saved calibrator model instead of fitting");
  calibrate->add_option("--input,-i", cal_input, "Dataset to recalibrate (with --apply)");
  calibrate->add_option("--out", cal_out, "Recalibrated dataset path (with --apply)");

  // regress
  Common reg_c;
  std::string reg_input, reg_covariate, reg_output;
  double reg_threshold = 90.0;
  auto* regress = app.add_subcommand("regress", "Daily stance vs covariate OLS, with and without a confidence filter");
  add_common(regress, reg_c);
  regress->add_option("--input,-i", reg_input, "Sentence-level dataset with group_key")->required();
  regress->add_option("--covariate,-c", reg_covariate, "CSV of group_key,value")->required();
  regress->add_option("--threshold,-t", reg_threshold, "Confidence filter on the 0-100 scale")->capture_default_str();
  regress->add_option("--output,-o", reg_output, "Also write the JSON report here");

  // simulate
  Common sim_c;
  std::string sim_scenario = "profile", sim_profile = "identity", sim_out, sim_covariate_out, sim_features_out,
              sim_teacher = "uninformative", sim_name;
  std::size_t sim_n = 1000, sim_days = 200, sim_sentences = 20;
  std::uint64_t sim_seed = 0;
  double sim_threshold = 90.0;
  auto* simulate = app.add_subcommand("simulate", "Write seeded synthetic datasets");
  add_common(simulate, sim_c);
  simulate->add_option("--scenario", sim_scenario, "profile, attenuation or distill")
      ->check(CLI::IsMember({"profile", "attenuation", "distill"}))
      ->capture_default_str();
  simulate->add_option("--profile,-p", sim_profile,
                       "identity, overconfident[:gamma], underconfident[:gamma], base_rate[:p], temperature[:tau]")
      ->capture_default_str();
  simulate->add_option("--n,-n", sim_n, "Records (profile and distill scenarios)")->capture_default_str();
  simulate->add_option("--seed,-s", sim_seed, "Generator seed")->capture_default_str();
  simulate->add_option("--out,-o", sim_out, "Dataset path")->required();
  simulate->add_option("--name", sim_name, "Dataset name recorded in reports");
  simulate->add_option("--days", sim_days, "Days (attenuation)")->capture_default_str();
  simulate->add_option("--sentences", sim_sentences, "Sentences per day (attenuation)")->capture_default_str();
  simulate->add_option("--threshold,-t", sim_threshold, "Filter threshold on the 0-100 scale (attenuation summary)")
      ->capture_default_str();
  simulate->add_option("--covariate-out", sim_covariate_out, "Covariate CSV path (attenuation)");
  simulate->add_option("--teacher", sim_teacher, "uninformative or calibrated (distill)")
      ->check(CLI::IsMember({"uninformative", "calibrated"}))
      ->capture_default_str();
  simulate->add_option("--features-out", sim_features_out, "Feature CSV path (distill)");

  // distill
  Common dis_c;
  std::string dis_input, dis_features, dis_model_out, dis_output, dis_name;
  int dis_k = 0;
  TrainConfig train;
  auto* distill = app.add_subcommand("distill", "Train a soft-label student and compare it with the teacher");
  add_common(distill, dis_c);
  distill->add_option("--input,-i", dis_input, "Teacher dataset")->required();
  distill->add_option("--features,-f", dis_features, "Feature matrix (CSV or JSONL) keyed by id")->required();
  distill->add_option("--k", dis_k, "Class count (0: 11 for fomc, else 10)")->capture_default_str();
  distill->add_option("--name", dis_name, "Dataset name used to pick the class count");
  distill->add_option("--epochs", train.epochs)->capture_default_str();
  distill->add_option("--lr", train.learning_rate)->capture_default_str();
  distill->add_option("--batch", train.batch_size)->capture_default_str();
  distill->add_option("--temperature", train.temperature)->capture_default_str();
  distill->add_option("--grad-clip", train.grad_clip)->capture_default_str();
  distill->add_option("--split", train.split_fraction, "Training share")->capture_default_str();
  distill->add_option("--seed,-s", train.seed)->capture_default_str();
  distill->add_option("--model-out", dis_model_out, "Write the student model JSON here");
  distill->add_option("--output,-o", dis_output, "Also write the JSON report here");

  // elicit
  Common eli_c;
  std::string eli_texts, eli_out, eli_name = "elicited";
  ConstructPrompt construct;
  ElicitConfig eli;
  bool eli_no_conf = false;
  auto* elicit = app.add_subcommand("elicit", "Collect scores and verbalized confidences from a chat-completions endpoint");
  add_common(elicit, eli_c);
  elicit->add_option("--texts", eli_texts, "JSONL of {id, text, y_true}")->required();
  elicit->add_option("--attribute", construct.attribute_name, "Attribute name")->required();
  elicit->add_option("--definition", construct.definition_text, "Attribute definition")->required();
  elicit->add_option("--endpoint", eli.endpoint_url)->capture_default_str();
  elicit->add_option("--model", eli.model_name)->required();
  elicit->add_option("--api-key-env", eli.api_key_env_var, "Environment variable holding the API key ('' for none)")
      ->capture_default_str();
  elicit->add_option("--temperature", eli.temperature)->capture_default_str();
  elicit->add_option("--top-p", eli.top_p)->capture_default_str();
  elicit->add_option("--max-tokens", eli.max_tokens)->capture_default_str();
  elicit->add_option("--retries", eli.retries)->capture_default_str();
  elicit->add_option("--resamples", eli.resamples, "Draws per text; more than 1 records resampling evidence")
      ->capture_default_str();
  elicit->add_option("--concurrency", eli.concurrency)->capture_default_str();
  elicit->add_option("--backoff-ms", eli.initial_backoff_ms)->capture_default_str();
  elicit->add_option("--timeout", eli.timeout_seconds, "Per-request timeout in seconds")->capture_default_str();
  elicit->add_flag("--no-confidence", eli_no_conf, "Do not ask for accuracy_estimate");
  elicit->add_option("--name", eli_name)->capture_default_str();
  elicit->add_option("--out,-o", eli_out, "Dataset path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "run '" << sub->get_name() << " --help' for usage\n";
    return kUsage;
  }

  try {
    if (audit->parsed()) {
      const auto tol = audit_c.tolerance();
      auto data = audit_c.load(audit_input);
      if (!audit_proxy.empty()) data = attach_proxy(data, parse_proxy_method(audit_proxy), tol);
      const auto report = metric_report(data, tol);
      if (!report.mh) err << "warning: rank correlation unavailable: " << report.mh_error << "\n";
      if (!audit_diagram.empty()) {
        DiagramOptions opts;
        opts.title = data.name() + " (\xCE\xB5 = " + format_number(tol.epsilon) + ")";
        write_text(audit_diagram, reliability_svg(report.bins, report.t_ece, opts));
      }
      emit(to_json(report), audit_output, out);
      return kOk;
    }

    if (diagram->parsed()) {
      const auto tol = diag_c.tolerance();
      auto data = diag_c.load(diag_input);
      if (!diag_proxy.empty()) data = attach_proxy(data, parse_proxy_method(diag_proxy), tol);
      const auto bins = reliability_bins(data, tol);
      DiagramOptions opts;
      opts.title = diag_title.empty() ? data.name() : diag_title;
      write_text(diag_output, reliability_svg(bins, t_ece(bins), opts));
      return kOk;
    }

    if (calibrate->parsed()) {
      const auto tol = cal_c.tolerance();
      if (!cal_apply.empty()) {
        if (cal_input.empty() || cal_out.empty()) {
          err << "error: --apply needs --input and --out\n";
          return kUsage;
        }
        std::ifstream f(cal_apply);
        if (!f) fail(ErrorKind::invalid_input, "cannot open '" + cal_apply + "'");
        json doc;
        try {
          doc = json::parse(f);
        } catch (const json::exception& e) {
          fail(ErrorKind::parse, cal_apply + ": " + e.what());
        }
        const auto model = calibrator_from_json(doc);
        const auto calibrated = apply(model, cal_c.load(cal_input));
        save(cal_out, calibrated, cal_c);
        emit(to_json(metric_report(calibrated, tol)), cal_output, out);
        return kOk;
      }
      if (cal_train.empty() || cal_test.empty()) {
        err << "error: calibrate needs --train and --test (or --apply)\n";
        return kUsage;
      }
      const auto comparison = compare_calibrators(cal_c.load(cal_train), cal_c.load(cal_test), tol);
      for (const auto& m : comparison.methods) {
        if (!m.ok) err << "warning: " << m.method << " failed: " << m.error << "\n";
        else if (m.resolution_collapse) err << "warning: " << m.method << " shows resolution collapse\n";
        if (!cal_model_dir.empty() && m.model)
          write_text(fs::path(cal_model_dir) / (m.method + ".json"), to_json(*m.model).dump(2) + "\n");
      }
      emit(to_json(comparison), cal_output, out);
      return comparison.succeeded() > 0 ? kOk : kValidation;
    }

    if (regress->parsed()) {
      reg_c.tolerance();
      const double threshold = threshold_from_percent(reg_threshold);
      const auto data = reg_c.load(reg_input);
      const auto covariate = load_covariate(reg_covariate);
      std::vector<std::string> unmatched;
      const auto unfiltered = stance_regression(data, covariate, &unmatched);
      const auto kept = confidence_filter(data, threshold);
      std::vector<std::string> unmatched_filtered;
      const auto filtered = stance_regression(kept, covariate, &unmatched_filtered);
      if (!unmatched.empty()) {
        err << "warning: " << unmatched.size() << " group(s) have no covariate value:";
        for (const auto& k : unmatched) err << " " << k;
        err << "\n";
      }
      json doc = {{"threshold", reg_threshold},
                  {"unfiltered", to_json(unfiltered)},
                  {"filtered", to_json(filtered)},
                  {"sentences", data.size()},
                  {"kept_sentences", kept.size()},
                  {"unmatched", unmatched}};
      emit(doc, reg_output, out);
      return kOk;
    }

    if (simulate->parsed()) {
      const auto tol = sim_c.tolerance();
      if (sim_scenario == "profile") {
        const auto profile = parse_profile(sim_profile);
        auto data = generate(profile, sim_n, tol.epsilon, sim_seed);
        if (!sim_name.empty()) data = Dataset(sim_name, data.records());
        save(sim_out, data, sim_c);
        emit({{"scenario", "profile"}, {"profile", profile.name()}, {"n", data.size()}, {"seed", sim_seed},
              {"out", sim_out}},
             "", out);
      } else if (sim_scenario == "attenuation") {
        const auto result =
            attenuation_experiment(sim_seed, sim_days, sim_sentences, threshold_from_percent(sim_threshold), tol);
        save(sim_out, result.sentences_data, sim_c);
        if (!sim_covariate_out.empty()) save_covariate(sim_covariate_out, result.covariate);
        auto doc = to_json(result);
        doc["scenario"] = "attenuation";
        doc["seed"] = sim_seed;
        emit(doc, "", out);
      } else {
        const auto scenario = sim_teacher == "calibrated" ? DistillScenario::calibrated_teacher
                                                          : DistillScenario::uninformative_teacher;
        auto generated = generate_distill(scenario, sim_n, tol.epsilon, sim_seed);
        if (!sim_name.empty()) generated.dataset = Dataset(sim_name, generated.dataset.records());
        save(sim_out, generated.dataset, sim_c);
        if (!sim_features_out.empty()) save_features(sim_features_out, generated.dataset, generated.features);
        emit({{"scenario", "distill"}, {"teacher", to_string(scenario)}, {"n", sim_n}, {"seed", sim_seed},
              {"out", sim_out}},
             "", out);
      }
      return kOk;
    }

    if (distill->parsed()) {
      const auto tol = dis_c.tolerance();
      auto data = dis_c.load(dis_input);
      if (!dis_name.empty()) data = Dataset(dis_name, data.records());
      const auto features = load_features(dis_features, data);
      const auto report = distill_pipeline(data, features, dis_k, train, tol);
      if (!dis_model_out.empty()) write_text(dis_model_out, to_json(report.model).dump() + "\n");
      auto doc = to_json(report);
      doc["dataset"] = data.name();
      emit(doc, dis_output, out);
      return kOk;
    }

    if (elicit->parsed()) {
      construct.tolerance = eli_c.tolerance().epsilon;
      eli.with_confidence = !eli_no_conf;
      const auto texts = load_text_items(eli_texts);
      const auto result = elicit_dataset(texts, construct, eli, eli_name);
      for (const auto& line : result.log) err << line << "\n";
      save(eli_out, result.dataset, eli_c);
      json failures = json::array();
      for (const auto& f : result.failures) failures.push_back({{"id", f.id}, {"reason", f.reason}});
      emit({{"records", result.dataset.size()}, {"failures", failures}, {"retries", result.retries}, {"out", eli_out}},
           "", out);
      return result.dataset.empty() && !texts.empty() ? kRuntime : kOk;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace tolcal::cli
