#include "bpre/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include "bpre/errors.hpp"
#include "bpre/exact_engine.hpp"
#include "bpre/rate_function.hpp"

namespace bpre {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

[[noreturn]] void schema_fail(const std::string& ptr, const std::string& msg) {
  throw SchemaError(ptr, msg);
}

void require_object(const json& j, const std::string& ptr) {
  if (!j.is_object()) schema_fail(ptr, "expected an object");
}

void check_keys(const json& obj, const std::string& ptr, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) schema_fail(ptr + "/" + it.key(), "unknown key");
}

const json& require_key(const json& obj, const std::string& ptr, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(ptr + "/" + key, "missing required key");
  return *it;
}

double get_double(const json& j, const std::string& ptr) {
  if (!j.is_number()) schema_fail(ptr, "expected a number");
  return j.get<double>();
}

long long get_int(const json& j, const std::string& ptr) {
  if (!j.is_number_integer()) schema_fail(ptr, "expected an integer");
  return j.get<long long>();
}

bool get_bool(const json& j, const std::string& ptr) {
  if (!j.is_boolean()) schema_fail(ptr, "expected a boolean");
  return j.get<bool>();
}

std::vector<double> get_double_array(const json& j, const std::string& ptr) {
  if (!j.is_array() || j.empty()) schema_fail(ptr, "expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_double(j[i], ptr + "/" + std::to_string(i)));
  return out;
}

std::vector<int> get_int_array(const json& j, const std::string& ptr) {
  if (!j.is_array() || j.empty()) schema_fail(ptr, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<int>(get_int(j[i], ptr + "/" + std::to_string(i))));
  return out;
}

EnvModel parse_env(const json& j, const std::string& ptr) {
  require_object(j, ptr);
  check_keys(j, ptr, {"laws", "weights"});
  const json& jl = require_key(j, ptr, "laws");
  const json& jw = require_key(j, ptr, "weights");
  if (!jl.is_array() || jl.empty()) schema_fail(ptr + "/laws", "expected a non-empty array");
  std::vector<OffspringLaw> laws;
  for (std::size_t i = 0; i < jl.size(); ++i) {
    const std::string lptr = ptr + "/laws/" + std::to_string(i);
    try {
      laws.emplace_back(get_double_array(jl[i], lptr));
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& e) {
      schema_fail(lptr, e.what());
    }
  }
  try {
    return EnvModel(std::move(laws), get_double_array(jw, ptr + "/weights"));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    schema_fail(ptr + "/weights", e.what());
  }
}

const std::set<std::string> kStudyIds = {"ldp", "mdp", "clt", "moment", "harmonic", "berry_esseen"};

void validate_study_params(const StudySpec& spec, const std::string& ptr);

}  // namespace

ExperimentConfig parse_config(const std::string& bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    schema_fail("", std::string("invalid JSON: ") + e.what());
  }
  require_object(j, "");
  check_keys(j, "",
             {"env", "studies", "seed", "workers", "output_dir", "tolerances", "rate", "exact"});

  const json& jenv = require_key(j, "", "env");
  const json& jseed = require_key(j, "", "seed");
  if (!jseed.is_number_integer() ||
      (!jseed.is_number_unsigned() && jseed.get<long long>() < 0))
    schema_fail("/seed", "expected a non-negative integer seed");

  ExperimentConfig cfg{parse_env(jenv, "/env"), {}, jseed.get<std::uint64_t>(), 1, {}, {}, {}, {}};

  if (j.contains("workers")) {
    const long long w = get_int(j["workers"], "/workers");
    if (w < 0) schema_fail("/workers", "workers must be >= 0 (0 = all available)");
    cfg.workers = static_cast<int>(w);
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) schema_fail("/output_dir", "expected a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("studies")) {
    const json& js = j["studies"];
    if (!js.is_array()) schema_fail("/studies", "expected an array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < js.size(); ++i) {
      const std::string ptr = "/studies/" + std::to_string(i);
      require_object(js[i], ptr);
      check_keys(js[i], ptr, {"study_id", "params"});
      const json& jid = require_key(js[i], ptr, "study_id");
      if (!jid.is_string()) schema_fail(ptr + "/study_id", "expected a string");
      const std::string id = jid.get<std::string>();
      if (!kStudyIds.count(id)) throw Error(errc::unknown_study, id);
      if (!seen.insert(id).second)
        schema_fail(ptr + "/study_id", "duplicate study id (output layout is keyed by id)");
      StudySpec spec{id, json::object()};
      if (js[i].contains("params")) {
        require_object(js[i]["params"], ptr + "/params");
        spec.params = js[i]["params"];
      }
      validate_study_params(spec, ptr + "/params");
      cfg.studies.push_back(std::move(spec));
    }
  }
  if (j.contains("tolerances")) {
    const json& jt = j["tolerances"];
    require_object(jt, "/tolerances");
    for (auto it = jt.begin(); it != jt.end(); ++it) {
      if (!kStudyIds.count(it.key())) schema_fail("/tolerances/" + it.key(), "unknown study id");
      require_object(*it, "/tolerances/" + it.key());
      Tolerances t;
      for (auto jt2 = it->begin(); jt2 != it->end(); ++jt2)
        t[jt2.key()] = get_double(*jt2, "/tolerances/" + it.key() + "/" + jt2.key());
      cfg.tolerances[it.key()] = std::move(t);
    }
  }
  if (j.contains("rate")) {
    const json& jr = j["rate"];
    require_object(jr, "/rate");
    check_keys(jr, "/rate", {"t_min", "t_max", "t_count", "x_count"});
    if (jr.contains("t_min")) cfg.rate.t_min = get_double(jr["t_min"], "/rate/t_min");
    if (jr.contains("t_max")) cfg.rate.t_max = get_double(jr["t_max"], "/rate/t_max");
    if (jr.contains("t_count")) cfg.rate.t_count = static_cast<int>(get_int(jr["t_count"], "/rate/t_count"));
    if (jr.contains("x_count")) cfg.rate.x_count = static_cast<int>(get_int(jr["x_count"], "/rate/x_count"));
    if (cfg.rate.t_count < 2 || cfg.rate.x_count < 2) schema_fail("/rate", "grid counts must be >= 2");
    if (!(cfg.rate.t_min < cfg.rate.t_max)) schema_fail("/rate", "t_min must be < t_max");
  }
  if (j.contains("exact")) {
    const json& je = j["exact"];
    require_object(je, "/exact");
    check_keys(je, "/exact", {"n", "z_max", "t_grid"});
    cfg.exact.n = static_cast<int>(get_int(require_key(je, "/exact", "n"), "/exact/n"));
    if (cfg.exact.n < 0) schema_fail("/exact/n", "n must be >= 0");
    if (je.contains("z_max")) {
      cfg.exact.z_max = static_cast<int>(get_int(je["z_max"], "/exact/z_max"));
      if (cfg.exact.z_max < 2) schema_fail("/exact/z_max", "z_max must be >= 2");
    }
    if (je.contains("t_grid")) cfg.exact.t_grid = get_double_array(je["t_grid"], "/exact/t_grid");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io_error, "cannot open config " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(bytes);
}

namespace {

LdpParams parse_ldp(const json& p, const std::string& ptr) {
  check_keys(p, ptr, {"x_grid", "n_list", "M", "z_cap"});
  LdpParams out;
  out.x_grid = get_double_array(require_key(p, ptr, "x_grid"), ptr + "/x_grid");
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  return out;
}

MdpParams parse_mdp(const json& p, const std::string& ptr) {
  check_keys(p, ptr, {"beta", "x_grid", "t_grid", "n_list", "M", "n_oracle", "z_cap"});
  MdpParams out;
  out.schedule.beta = get_double(require_key(p, ptr, "beta"), ptr + "/beta");
  out.x_grid = get_double_array(require_key(p, ptr, "x_grid"), ptr + "/x_grid");
  if (p.contains("t_grid")) out.t_grid = get_double_array(p["t_grid"], ptr + "/t_grid");
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("n_oracle")) out.n_oracle = static_cast<int>(get_int(p["n_oracle"], ptr + "/n_oracle"));
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  return out;
}

CltParams parse_clt(const json& p, const std::string& ptr) {
  check_keys(p, ptr, {"n_list", "M", "z_cap", "dump_samples"});
  CltParams out;
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  if (p.contains("dump_samples")) out.dump_samples = get_bool(p["dump_samples"], ptr + "/dump_samples");
  return out;
}

MomentParams parse_moment(const json& p, const std::string& ptr) {
  check_keys(p, ptr, {"t_grid", "n_list", "M", "n_oracle", "z_cap"});
  MomentParams out;
  out.t_grid = get_double_array(require_key(p, ptr, "t_grid"), ptr + "/t_grid");
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("n_oracle")) out.n_oracle = static_cast<int>(get_int(p["n_oracle"], ptr + "/n_oracle"));
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  return out;
}

HarmonicParams parse_harmonic(const json& p, const std::string& ptr) {
  check_keys(p, ptr,
             {"a_grid", "n_list", "M", "n_total_tail", "fit_cap", "h_delta", "z_cap", "dump_samples"});
  HarmonicParams out;
  out.a_grid = get_double_array(require_key(p, ptr, "a_grid"), ptr + "/a_grid");
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("n_total_tail"))
    out.n_total_tail = static_cast<int>(get_int(p["n_total_tail"], ptr + "/n_total_tail"));
  if (p.contains("fit_cap")) out.fit_cap = get_double(p["fit_cap"], ptr + "/fit_cap");
  if (p.contains("h_delta")) out.h_delta = get_double(p["h_delta"], ptr + "/h_delta");
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  if (p.contains("dump_samples")) out.dump_samples = get_bool(p["dump_samples"], ptr + "/dump_samples");
  return out;
}

BerryEsseenParams parse_be(const json& p, const std::string& ptr) {
  check_keys(p, ptr, {"epsilon", "n_list", "horizon", "M", "z_cap", "dump_samples"});
  BerryEsseenParams out;
  out.epsilon = get_double(require_key(p, ptr, "epsilon"), ptr + "/epsilon");
  out.n_list = get_int_array(require_key(p, ptr, "n_list"), ptr + "/n_list");
  out.horizon = static_cast<int>(get_int(require_key(p, ptr, "horizon"), ptr + "/horizon"));
  out.m_samples = get_int(require_key(p, ptr, "M"), ptr + "/M");
  if (p.contains("z_cap")) out.z_cap = get_int(p["z_cap"], ptr + "/z_cap");
  if (p.contains("dump_samples")) out.dump_samples = get_bool(p["dump_samples"], ptr + "/dump_samples");
  return out;
}

}  // namespace

namespace {

// parse-time structural validation (strict keys, required params)
void validate_study_params(const StudySpec& spec, const std::string& ptr) {
  if (spec.study_id == "ldp") parse_ldp(spec.params, ptr);
  if (spec.study_id == "mdp") parse_mdp(spec.params, ptr);
  if (spec.study_id == "clt") parse_clt(spec.params, ptr);
  if (spec.study_id == "moment") parse_moment(spec.params, ptr);
  if (spec.study_id == "harmonic") parse_harmonic(spec.params, ptr);
  if (spec.study_id == "berry_esseen") parse_be(spec.params, ptr);
}

}  // namespace

StudyResult dispatch_study(const EnvModel& env, const StudySpec& spec,
                           const Tolerances& tolerance_overrides, std::uint64_t seed,
                           std::uint64_t stream_ns, int workers) {
  const std::string ptr = "/studies/" + spec.study_id + "/params";
  if (spec.study_id == "ldp")
    return run_ldp_study(env, parse_ldp(spec.params, ptr), tolerance_overrides, seed, stream_ns,
                         workers);
  if (spec.study_id == "mdp")
    return run_mdp_study(env, parse_mdp(spec.params, ptr), tolerance_overrides, seed, stream_ns,
                         workers);
  if (spec.study_id == "clt")
    return run_clt_study(env, parse_clt(spec.params, ptr), tolerance_overrides, seed, stream_ns,
                         workers);
  if (spec.study_id == "moment")
    return run_moment_study(env, parse_moment(spec.params, ptr), tolerance_overrides, seed,
                            stream_ns, workers);
  if (spec.study_id == "harmonic")
    return run_harmonic_study(env, parse_harmonic(spec.params, ptr), tolerance_overrides, seed,
                              stream_ns, workers);
  if (spec.study_id == "berry_esseen")
    return run_berry_esseen_study(env, parse_be(spec.params, ptr), tolerance_overrides, seed,
                                  stream_ns, workers);
  throw Error(errc::unknown_study, spec.study_id);
}

json study_result_to_json(const StudyResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"key", row.key},
                    {"key_value", row.key_value},
                    {"estimate", row.estimate},
                    {"std_error", row.std_error},
                    {"theory_value", row.theory_value},
                    {"abs_gap", row.abs_gap},
                    {"designated", row.designated},
                    {"note", row.note}});
  }
  return json{{"study_id", r.study_id}, {"env_hash", r.env_hash}, {"seed", r.seed},
              {"verdict", verdict_name(r.verdict)}, {"runtime_s", r.runtime_s},
              {"tolerances", r.tolerances}, {"gates", r.gates}, {"rows", rows}};
}

std::string rows_to_csv(const StudyResult& r) {
  std::string csv = "key,key_value,estimate,std_error,theory_value,abs_gap,designated,note\n";
  for (const auto& row : r.rows) {
    std::string note = row.note;
    for (char& ch : note)
      if (ch == ',' || ch == '\n') ch = ';';
    csv += row.key + "," + fmt17(row.key_value) + "," + fmt17(row.estimate) + "," +
           fmt17(row.std_error) + "," + fmt17(row.theory_value) + "," + fmt17(row.abs_gap) + "," +
           (row.designated ? "1" : "0") + "," + note + "\n";
  }
  return csv;
}

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::io_error, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(errc::io_error, "short write to " + path.string());
}

}  // namespace

void write_study_outputs(const StudyResult& r, const std::string& study_dir) {
  static_assert(std::endian::native == std::endian::little,
                "sample dumps are little-endian float64");
  const fs::path dir(study_dir);
  fs::create_directories(dir / "plot");
  write_file(dir / "result.json", study_result_to_json(r).dump(2) + "\n");
  write_file(dir / "rows.csv", rows_to_csv(r));
  for (const auto& s : r.series) {
    std::string tsv;
    for (const auto& [x, y] : s.points) tsv += fmt17(x) + "\t" + fmt17(y) + "\n";
    write_file(dir / "plot" / (s.name + ".tsv"), tsv);
  }
  if (!r.dumps.empty()) fs::create_directories(dir / "dump");
  for (const auto& d : r.dumps) {
    std::string bytes(d.samples.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), d.samples.data(), bytes.size());
    write_file(dir / "dump" / (d.name + ".f64"), bytes);
    write_file(dir / "dump" / (d.name + ".json"),
               json{{"count", d.samples.size()}, {"seed", r.seed}, {"env_hash", r.env_hash}}
                       .dump(2) +
                   "\n");
  }
}

int run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                   std::optional<std::uint64_t> seed_override, std::optional<int> workers_override,
                   std::ostream& log) {
  if (config.studies.empty()) throw Error(errc::precondition_violated, "no studies configured");
  const std::uint64_t seed = seed_override.value_or(config.seed);
  const int workers = workers_override.value_or(config.workers);
  const fs::path out(out_dir);
  fs::create_directories(out);

  json summary = json::object();
  bool any_fail = false, any_inconclusive = false;
  for (std::size_t ordinal = 0; ordinal < config.studies.size(); ++ordinal) {
    const StudySpec& spec = config.studies[ordinal];
    const std::uint64_t stream_ns = (static_cast<std::uint64_t>(ordinal) + 1) << 48;
    Tolerances overrides;
    if (auto it = config.tolerances.find(spec.study_id); it != config.tolerances.end())
      overrides = it->second;
    try {
      const StudyResult res = dispatch_study(config.env, spec, overrides, seed, stream_ns, workers);
      write_study_outputs(res, (out / spec.study_id).string());
      summary[spec.study_id] = verdict_name(res.verdict);
      any_fail = any_fail || res.verdict == Verdict::fail;
      any_inconclusive = any_inconclusive || res.verdict == Verdict::inconclusive;
      log << spec.study_id << ": " << verdict_name(res.verdict) << " (" << fmt17(res.runtime_s)
          << " s)\n";
    } catch (const SchemaError& e) {
      throw;  // bad params are a config error, not a study outcome
    } catch (const Error& e) {
      const bool refused = e.code() == errc::precondition_violated ||
                           e.code() == errc::degenerate_sigma ||
                           e.code() == errc::degenerate_tilt ||
                           e.code() == errc::hypothesis_violated ||
                           e.code() == errc::not_supercritical || e.code() == errc::invalid_env;
      const char* verdict = refused ? "refused" : "error";
      summary[spec.study_id] = verdict;
      fs::create_directories(out / spec.study_id);
      write_file(out / spec.study_id / "error.json",
                 json{{"verdict", verdict}, {"message", e.what()}}.dump(2) + "\n");
      any_fail = true;
      log << spec.study_id << ": " << verdict << " (" << e.what() << ")\n";
    }
  }

  // summary.json is written last through a rename so partial runs are detectable
  const fs::path tmp = out / "summary.json.tmp";
  write_file(tmp, summary.dump(2) + "\n");
  fs::rename(tmp, out / "summary.json");
  return any_fail ? 1 : any_inconclusive ? 2 : 0;
}

json hypothesis_report_to_json(const HypothesisHReport& h) {
  json j{{"A1", h.A1},          {"A", h.A},
         {"delta", h.delta},    {"holds", h.holds},
         {"p1_sup", h.p1_sup},  {"E_p1", h.e_p1},
         {"underline_m", h.underline_m}, {"p1_zero", h.p1_zero}};
  if (h.gamma) j["gamma"] = *h.gamma;
  return j;
}

int cmd_validate(const ExperimentConfig& config, double delta, std::ostream& out) {
  const HypothesisHReport h = check_hypothesis_h(config.env, delta);
  json j = hypothesis_report_to_json(h);
  const EnvSummary s = env_summary_unchecked(config.env);
  j["E_log_m"] = s.e_log_m;
  j["sigma2"] = s.sigma2;
  j["supercritical"] = s.e_log_m > 0.0;
  j["env_hash"] = env_hash_hex(config.env);
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_rate(const ExperimentConfig& config, const std::string& out_dir) {
  const RateFunction rf(config.env);
  const RateGridSpec& g = config.rate;
  const fs::path dir = fs::path(out_dir) / "rate";
  fs::create_directories(dir);

  std::string lam = "t,lambda,dlambda,d2lambda\n";
  for (int i = 0; i < g.t_count; ++i) {
    const double t = g.t_min + (g.t_max - g.t_min) * i / (g.t_count - 1);
    lam += fmt17(t) + "," + fmt17(rf.lambda(t)) + "," + fmt17(rf.lambda_prime(t)) + "," +
           fmt17(rf.lambda_second(t)) + "\n";
  }
  write_file(dir / "lambda_grid.csv", lam);

  const auto [x_min, x_max] = rf.domain();
  std::string leg = "x,lambda_star,t_star\n";
  for (int i = 0; i < g.x_count; ++i) {
    const double x = x_min + (x_max - x_min) * i / (g.x_count - 1);
    const auto c = rf.legendre(x);
    leg += fmt17(x) + "," + fmt17(c.value) + "," + fmt17(c.t_star) + "\n";
  }
  write_file(dir / "legendre_grid.csv", leg);
  return 0;
}

int cmd_exact(const ExperimentConfig& config, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / "exact";
  fs::create_directories(dir);
  const PmfVector pmf = annealed_pmf(config.env, config.exact.n, config.exact.z_max);

  std::string csv = "z,mass\n";
  for (std::size_t z = 1; z < pmf.masses.size(); ++z)
    if (pmf.masses[z] > 0.0) csv += std::to_string(z) + "," + fmt17(pmf.masses[z]) + "\n";
  write_file(dir / ("pmf_n" + std::to_string(config.exact.n) + ".csv"), csv);

  json moments = json::array();
  for (double t : config.exact.t_grid) {
    const MomentResult m = exact_moment(pmf, t);
    moments.push_back(
        {{"n", config.exact.n}, {"t", t}, {"value", m.value}, {"error_bound", m.error_bound}});
  }
  write_file(dir / "moments.json",
             json{{"lost_mass", pmf.lost_mass}, {"moments", moments}}.dump(2) + "\n");
  return 0;
}

}  // namespace bpre
