// ieclof: IEC 104 inter-arrival-time outlier detection pipeline.
//
// Exit status: 0 ok, 1 outliers found (--fail-on-outlier), 2 usage error or
// missing input, 3 data or I/O error.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "ieclof/ieclof.hpp"

using namespace ieclof;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOutliers = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct Options {
  std::string input;
  std::string output;
  std::string model;
  std::string plot;
  std::string json_out;
  std::string scenario_file;
  std::string conversation = "per-conversation";
  std::string threshold = "1.5";
  std::string mode = "batch";
  std::size_t k = kDefaultK;
  std::size_t window_size = kDefaultWindowSize;
  double train_fraction = kDefaultTrainFraction;
  std::uint16_t port = kIec104Port;
  bool i_frames_only = false;
  bool fail_on_outlier = false;
  bool labels = true;

  // generate
  std::size_t count = 15001;
  double period = 1.0;
  double jitter = 0.01;
  std::uint64_t seed = 1;

  // inject
  std::string kind;
  std::size_t start = 0;
  std::size_t duration = 0;
  double magnitude = 0.0;
  std::uint64_t attack_seed = 0;

  // bench
  std::size_t repeat = 3;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

bool is_pcap(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  return ext == ".pcap" || ext == ".cap";
}

WindowConfig window_config(const Options& o) {
  WindowConfig c;
  c.k = o.k;
  c.window_size = o.window_size;
  c.train_fraction = o.train_fraction;
  if (o.threshold == "auto") {
    c.policy = ThresholdPolicy::auto_quantile;
  } else {
    std::size_t used = 0;
    try {
      c.threshold = std::stod(o.threshold, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != o.threshold.size()) throw usage_error("--threshold takes a number or 'auto'");
  }
  if (o.mode == "batch") c.mode = DetectMode::batch_per_window;
  else if (o.mode == "train-then-score") c.mode = DetectMode::train_then_score;
  else throw usage_error("--mode must be batch or train-then-score");
  c.validate();
  return c;
}

RecordSet load_records(const Options& o, IngestStats* stats) {
  if (is_pcap(o.input)) return {parse_pcap(o.input, {o.port, o.i_frames_only}, stats), {}};
  auto rs = parse_labeled_csv(o.input, stats);
  if (o.i_frames_only) {
    RecordSet f;
    for (std::size_t i = 0; i < rs.records.size(); ++i) {
      if (rs.records[i].apci_type != ApciType::I) continue;
      f.records.push_back(rs.records[i]);
      if (rs.labeled()) f.labels.push_back(rs.labels[i]);
    }
    return f;
  }
  return rs;
}

Endpoint parse_endpoint(const std::string& s) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos) throw usage_error("endpoint '" + s + "' must be addr:port");
  auto addr = Ipv4::parse(s.substr(0, colon));
  int port = -1;
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
  }
  if (!addr || port < 0 || port > 65535) throw usage_error("bad endpoint '" + s + "'");
  return {*addr, static_cast<std::uint16_t>(port)};
}

// Series selected by --conversation: merge-all, per-conversation, or A:p,B:q.
std::vector<FeatureSeries> select_series(const RecordSet& rs, const Options& o) {
  std::span<const Label> labels = o.labels ? std::span<const Label>(rs.labels) : std::span<const Label>{};
  if (o.conversation == "merge-all") return {extract_merged(rs.records, labels)};
  auto all = extract_features(rs.records, labels);
  std::vector<FeatureSeries> out;
  if (o.conversation == "per-conversation") {
    for (auto& [conv, s] : all) out.push_back(std::move(s));
    return out;
  }
  auto comma = o.conversation.find(',');
  if (comma == std::string::npos)
    throw usage_error("--conversation takes merge-all, per-conversation or addr:port,addr:port");
  Conversation want(parse_endpoint(o.conversation.substr(0, comma)), parse_endpoint(o.conversation.substr(comma + 1)));
  auto it = all.find(want);
  if (it == all.end()) throw data_error("conversation " + want.to_string() + " not present in input");
  out.push_back(std::move(it->second));
  return out;
}

// Exactly one series is required by train and bench.
FeatureSeries single_series(const RecordSet& rs, const Options& o) {
  auto series = select_series(rs, o);
  if (series.size() != 1)
    throw usage_error("input holds " + std::to_string(series.size()) +
                      " conversations; pick one with --conversation or use merge-all");
  return std::move(series.front());
}

std::vector<std::string> echo(const Options& o, const WindowConfig& c) {
  auto lines = c.echo();
  lines.insert(lines.begin(), "input=" + o.input);
  lines.push_back("conversation=" + o.conversation);
  lines.push_back("port=" + std::to_string(o.port));
  lines.push_back(std::string("i_frames_only=") + (o.i_frames_only ? "true" : "false"));
  return lines;
}

json echo_json(const std::vector<std::string>& lines) {
  json j = json::object();
  for (const auto& l : lines) {
    auto eq = l.find('=');
    j[l.substr(0, eq)] = l.substr(eq + 1);
  }
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw io_error("write failed: " + path);
}

void print_warnings(const IngestStats& st) {
  if (st.truncated) std::cerr << "warning: " << st.truncated << " truncated packets skipped\n";
  if (st.parse_errors) std::cerr << "warning: " << st.parse_errors << " APCI resynchronizations\n";
  if (st.gaps_skipped) std::cerr << "warning: " << st.gaps_skipped << " TCP gaps skipped\n";
  if (st.timestamp_regressions) std::cerr << "warning: " << st.timestamp_regressions << " timestamp regressions clamped\n";
  if (st.skipped_rows) std::cerr << "warning: " << st.skipped_rows << " malformed CSV rows skipped\n";
}

std::size_t conversation_count(const std::vector<PacketRecord>& recs) {
  std::set<Conversation> convs;
  for (const auto& r : recs) convs.insert(Conversation::of(r));
  return convs.size();
}

int cmd_extract(const Options& o) {
  Stopwatch sw;
  IngestStats st;
  auto recs = parse_pcap(o.input, {o.port, o.i_frames_only}, &st);
  std::vector<std::string> meta{"source=" + o.input, "port=" + std::to_string(o.port),
                                std::string("i_frames_only=") + (o.i_frames_only ? "true" : "false")};
  write_csv(recs, o.output, {}, meta);
  print_warnings(st);
  std::cout << "records: " << recs.size() << '\n'
            << "conversations: " << conversation_count(recs) << '\n'
            << "warnings: " << st.warnings() << '\n'
            << "elapsed_s: " << WindowConfig::format_double(sw.seconds()) << '\n';
  return 0;
}

int cmd_generate(const Options& o) {
  NormalPattern p{.period = o.period, .jitter_fraction = o.jitter, .count = o.count, .seed = o.seed};
  auto recs = generate_normal(p);
  if (is_pcap(o.output)) {
    Iec104Capture cap(o.output);
    for (const auto& r : recs) cap.write(r);
    cap.flush();
  } else {
    std::vector<std::string> meta{"generator=periodic", "count=" + std::to_string(o.count),
                                  "period=" + WindowConfig::format_double(o.period),
                                  "jitter=" + WindowConfig::format_double(o.jitter), "seed=" + std::to_string(o.seed)};
    write_csv(recs, o.output, {}, meta);
  }
  std::cout << "records: " << recs.size() << '\n';
  return 0;
}

// key=value lines or a JSON object with the same keys.
AttackScenario read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("no such file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  std::map<std::string, std::string> kv;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw data_error(path + ": " + e.what());
    }
    for (auto& [key, v] : j.items()) kv[key] = v.is_string() ? v.get<std::string>() : v.dump();
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw data_error(path + ": expected key=value, got '" + line + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
  }
  AttackScenario s;
  try {
    for (const auto& [key, v] : kv) {
      if (key == "kind") {
        auto k = attack_kind_from(v);
        if (!k) throw data_error(path + ": unknown attack kind '" + v + "'");
        s.kind = *k;
      } else if (key == "start") s.start = std::stoull(v);
      else if (key == "duration") s.duration = std::stoull(v);
      else if (key == "magnitude") s.magnitude = std::stod(v);
      else if (key == "seed") s.seed = std::stoull(v);
      else throw data_error(path + ": unknown scenario key '" + key + "'");
    }
  } catch (const std::logic_error&) {
    throw data_error(path + ": bad scenario value");
  }
  return s;
}

int cmd_inject(const Options& o, const CLI::App& sub) {
  AttackScenario s;
  if (!o.scenario_file.empty()) s = read_scenario_file(o.scenario_file);
  if (sub.count("--kind")) {
    auto k = attack_kind_from(o.kind);
    if (!k) throw usage_error("--kind must be flood, delay, injection or outage");
    s.kind = *k;
  }
  if (sub.count("--start")) s.start = o.start;
  if (sub.count("--duration")) s.duration = o.duration;
  if (sub.count("--magnitude")) s.magnitude = o.magnitude;
  if (sub.count("--attack-seed")) s.seed = o.attack_seed;
  if (o.scenario_file.empty() && !sub.count("--kind")) throw usage_error("give --scenario or --kind");
  IngestStats st;
  auto in = load_records(o, &st);
  print_warnings(st);
  auto out = inject(in, s);
  auto meta = s.echo();
  meta.insert(meta.begin(), "input=" + o.input);
  write_csv(out.records, o.output, out.labels, meta);
  auto attacks = static_cast<std::size_t>(std::count(out.labels.begin(), out.labels.end(), Label::attack));
  std::cout << "records: " << out.records.size() << '\n' << "attack_records: " << attacks << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  auto cfg = window_config(o);
  Stopwatch sw;
  IngestStats st;
  auto rs = load_records(o, &st);
  print_warnings(st);
  auto s = single_series(rs, o);
  auto set = train(s, cfg);
  save_model(set, o.model);
  std::cout << "samples: " << s.size() << '\n'
            << "windows: " << set.models().size() << '\n'
            << "threshold: " << format_score(set.threshold()) << '\n'
            << "elapsed_s: " << WindowConfig::format_double(sw.seconds()) << '\n';
  return 0;
}

int cmd_detect(const Options& o) {
  auto cfg = window_config(o);
  Stopwatch sw;
  IngestStats st;
  auto rs = load_records(o, &st);
  print_warnings(st);
  auto series = select_series(rs, o);
  std::optional<ModelSet> model;
  if (!o.model.empty()) model = load_model(o.model);
  auto meta = echo(o, cfg);
  if (model) meta.push_back("model=" + o.model);

  json jr;
  jr["config"] = echo_json(meta);
  jr["series"] = json::array();
  std::size_t total_outliers = 0, scored = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string name = s.conversation.to_string();
    if (!model && s.size() < cfg.k + 2) {
      std::cout << name << ": skipped, " << s.size() << " samples\n";
      continue;
    }
    auto report = model ? score_series(s, *model, cfg) : detect_windowed(s, cfg);
    ++scored;
    total_outliers += report.outliers;
    std::cout << name << ": samples " << report.total() << ", windows " << report.windows << ", threshold "
              << format_score(report.threshold) << ", outliers " << report.outliers << '\n';
    if (!o.plot.empty()) {
      std::string path = o.plot;
      if (series.size() > 1) {
        auto p = std::filesystem::path(o.plot);
        path = (p.parent_path() / (p.stem().string() + "." + std::to_string(i) + p.extension().string())).string();
      }
      auto m = meta;
      m.push_back("conversation_id=" + name);
      emit_plot_data(report, s, path, m);
    }
    json js{{"conversation", name},       {"samples", report.total()},
            {"windows", report.windows},  {"threshold", format_score(report.threshold)},
            {"outliers", report.outliers}, {"window_outliers", report.window_outliers}};
    js["outlier_indices"] = json::array();
    for (const auto& e : report.entries)
      if (e.verdict == Verdict::outlier) js["outlier_indices"].push_back(e.index);
    jr["series"].push_back(js);
  }
  if (scored == 0) throw data_error("no conversation has enough samples for k=" + std::to_string(cfg.k));
  jr["outliers"] = total_outliers;
  if (!o.json_out.empty()) write_json(o.json_out, jr);
  std::cout << "outliers: " << total_outliers << '\n'
            << "elapsed_s: " << WindowConfig::format_double(sw.seconds()) << '\n';
  return o.fail_on_outlier && total_outliers > 0 ? kExitOutliers : 0;
}

int cmd_validate(const Options& o) {
  auto cfg = window_config(o);
  IngestStats st;
  auto rs = load_records(o, &st);
  print_warnings(st);
  auto series = select_series(rs, o);
  json jr;
  jr["config"] = echo_json(echo(o, cfg));
  jr["series"] = json::array();
  std::size_t done = 0;
  for (const auto& s : series) {
    if (s.size() < 3 || split_series(s, o.train_fraction).train.size() < cfg.k + 2) {
      std::cout << s.conversation.to_string() << ": skipped, " << s.size() << " samples\n";
      continue;
    }
    auto v = validate(s, cfg, o.train_fraction);
    ++done;
    std::cout << "conversation=" << s.conversation.to_string() << '\n' << v.to_text();
    json js{{"conversation", s.conversation.to_string()},
            {"train_samples", v.train_samples},
            {"test_samples", v.test_samples},
            {"threshold", format_score(v.threshold)},
            {"false_positives", v.false_positives},
            {"fp_rate", v.fp_rate()}};
    if (v.attack_samples) {
      js["attack_samples"] = *v.attack_samples;
      js["detected"] = *v.detected;
      if (auto dr = v.detection_rate()) js["detection_rate"] = *dr;
    }
    jr["series"].push_back(js);
  }
  if (done == 0) throw data_error("no conversation is long enough to validate");
  if (!o.json_out.empty()) write_json(o.json_out, jr);
  return 0;
}

int cmd_bench(const Options& o) {
  if (o.repeat < 1) throw usage_error("--repeat must be at least 1");
  auto cfg = window_config(o);
  IngestStats st;
  auto rs = load_records(o, &st);
  print_warnings(st);
  auto s = single_series(rs, o);
  auto windows = partition_windows(s.size(), cfg.window_size, cfg.k);
  std::vector<double> times;
  bool deterministic = true;
  for (const auto& w : windows) {
    auto values = s.iats();
    std::vector<double> v(values.begin() + static_cast<std::ptrdiff_t>(w.begin),
                          values.begin() + static_cast<std::ptrdiff_t>(w.end));
    std::vector<double> first;
    for (std::size_t r = 0; r < o.repeat; ++r) {
      Stopwatch sw;
      auto m = fit(v, cfg.k);
      times.push_back(sw.seconds());
      std::vector<double> lof(m.lof().begin(), m.lof().end());
      if (r == 0) first = std::move(lof);
      else if (std::memcmp(first.data(), lof.data(), first.size() * sizeof(double)) != 0) deterministic = false;
    }
  }
  auto [mn, mx] = std::minmax_element(times.begin(), times.end());
  double mean = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  std::cout << "windows: " << windows.size() << '\n'
            << "fits: " << times.size() << '\n'
            << "fit_mean_s: " << WindowConfig::format_double(mean) << '\n'
            << "fit_min_s: " << WindowConfig::format_double(*mn) << '\n'
            << "fit_max_s: " << WindowConfig::format_double(*mx) << '\n'
            << "deterministic: " << (deterministic ? "yes" : "no") << '\n';
  if (!o.json_out.empty()) {
    json j{{"config", echo_json(echo(o, cfg))}, {"windows", windows.size()}, {"fit_seconds", times},
           {"mean", mean}, {"min", *mn}, {"max", *mx}, {"deterministic", deterministic}};
    write_json(o.json_out, j);
  }
  return deterministic ? 0 : kExitData;
}

int cmd_report(const Options& o) {
  IngestStats st;
  auto rs = load_records(o, &st);
  print_warnings(st);
  const auto& recs = rs.records;
  std::set<std::uint32_t> devices;
  std::size_t by_type[3] = {0, 0, 0};
  for (const auto& r : recs) {
    devices.insert(r.src.addr.value);
    devices.insert(r.dst.addr.value);
    ++by_type[static_cast<int>(r.apci_type)];
  }
  double duration = recs.size() > 1 ? recs.back().timestamp - recs.front().timestamp : 0.0;
  if (is_pcap(o.input)) std::cout << "packets: " << st.packets << '\n' << "tcp_segments: " << st.tcp_segments << '\n';
  std::cout << "records: " << recs.size() << '\n'
            << "i_frames: " << by_type[0] << '\n'
            << "s_frames: " << by_type[1] << '\n'
            << "u_frames: " << by_type[2] << '\n'
            << "duration_s: " << WindowConfig::format_double(duration) << '\n'
            << "devices: " << devices.size() << '\n'
            << "conversations: " << conversation_count(recs) << '\n';
  return 0;
}

void add_ingest(CLI::App* sub, Options& o) {
  sub->add_option("--input", o.input, "Input capture (.pcap) or record CSV")->required();
  sub->add_option("--port", o.port, "IEC 104 TCP port")->capture_default_str();
  sub->add_flag("--i-frames-only", o.i_frames_only, "Keep only I-format frames");
}

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--k", o.k, "Neighborhood size")->capture_default_str();
  sub->add_option("--window-size", o.window_size, "Samples per tumbling window")->capture_default_str();
  sub->add_option("--threshold", o.threshold, "LOF threshold, or 'auto' for the 99.9th percentile")
      ->capture_default_str();
  sub->add_option("--train-fraction", o.train_fraction, "Leading share of samples used for training")
      ->capture_default_str();
  sub->add_option("--conversation", o.conversation,
                  "merge-all, per-conversation, or addr:port,addr:port")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier detection on IEC 104 packet inter-arrival times"};
  app.set_config("--config", "", "Read options from an INI/TOML file; flags override it");
  app.require_subcommand(1);
  Options o;

  auto* extract = app.add_subcommand("extract", "Convert a capture into a record CSV");
  extract->add_option("--input", o.input, "Input capture")->required();
  extract->add_option("--output", o.output, "Output CSV")->required();
  extract->add_option("--port", o.port, "IEC 104 TCP port")->capture_default_str();
  extract->add_flag("--i-frames-only", o.i_frames_only, "Keep only I-format frames");

  auto* generate = app.add_subcommand("generate", "Write synthetic periodic master/slave traffic");
  generate->add_option("--output", o.output, "Output CSV, or .pcap for a capture")->required();
  generate->add_option("--count", o.count, "Packets")->capture_default_str();
  generate->add_option("--period", o.period, "Seconds between packets")->capture_default_str();
  generate->add_option("--jitter", o.jitter, "Relative jitter bound")->capture_default_str();
  generate->add_option("--seed", o.seed, "Random seed")->capture_default_str();

  auto* injectc = app.add_subcommand("inject", "Apply an attack scenario and write labeled records");
  add_ingest(injectc, o);
  injectc->add_option("--output", o.output, "Labeled output CSV")->required();
  injectc->add_option("--scenario", o.scenario_file, "Scenario file, key=value lines or JSON");
  injectc->add_option("--kind", o.kind, "flood, delay, injection or outage");
  injectc->add_option("--start", o.start, "First affected record index");
  injectc->add_option("--duration", o.duration, "Affected intervals");
  injectc->add_option("--magnitude", o.magnitude, "Packets per interval, or seconds");
  injectc->add_option("--attack-seed", o.attack_seed, "Scenario random seed");

  auto* trainc = app.add_subcommand("train", "Fit window models and save them");
  add_ingest(trainc, o);
  add_model(trainc, o);
  trainc->add_option("--model", o.model, "Model output file")->required();

  auto* detect = app.add_subcommand("detect", "Score samples and report outliers");
  add_ingest(detect, o);
  add_model(detect, o);
  detect->add_option("--model", o.model, "Score against a saved model instead of per-window fits");
  detect->add_option("--mode", o.mode, "batch or train-then-score")->capture_default_str();
  detect->add_option("--plot", o.plot, "Write sample_index,iat_seconds,score,verdict CSV");
  detect->add_option("--json", o.json_out, "Write a JSON summary");
  detect->add_flag("--fail-on-outlier", o.fail_on_outlier, "Exit with status 1 when outliers are found");

  auto* validatec = app.add_subcommand("validate", "Hold-out false positive and detection rates");
  add_ingest(validatec, o);
  add_model(validatec, o);
  validatec->add_option("--json", o.json_out, "Write a JSON summary");

  auto* bench = app.add_subcommand("bench", "Time model fits over the input windows");
  add_ingest(bench, o);
  add_model(bench, o);
  bench->add_option("--repeat", o.repeat, "Fits per window")->capture_default_str();
  bench->add_option("--json", o.json_out, "Write timings as JSON");

  auto* report = app.add_subcommand("report", "Capture statistics");
  add_ingest(report, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(o);
    if (*generate) return cmd_generate(o);
    if (*injectc) return cmd_inject(o, *injectc);
    if (*trainc) return cmd_train(o);
    if (*detect) return cmd_detect(o);
    if (*validatec) return cmd_validate(o);
    if (*bench) return cmd_bench(o);
    if (*report) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
