#include "pad/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "pad/errors.hpp"
#include "pad/rng.hpp"
#include "pad/verify.hpp"
#include "text_io.hpp"

namespace pad {

namespace {

std::filesystem::path resolve_path(const std::string& value, const std::filesystem::path& base) {
  if (value.empty()) return {};
  std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <class Fn>
auto checked(std::string_view key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what(), std::string(key));
  }
}

void require(bool ok, std::string_view key, const std::string& what) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + what, std::string(key));
}

}  // namespace

Experiment resolve_experiment(const ConfigMap& c, const std::filesystem::path& base_dir) {
  Experiment e;
  const std::uint64_t root = c.get_uint("seed");

  e.teacher.vocab.size = c.get_uint("model.vocab");
  e.teacher.vocab.eos_id = static_cast<Token>(c.get_uint("model.eos"));
  checked("model.vocab", [&] { e.teacher.vocab.validate(); });
  e.teacher.order = c.get_uint("model.order");
  require(e.teacher.order >= 1 && e.teacher.order <= 4, "model.order", "must be in [1, 4]");
  e.teacher.boost = c.get_double("teacher.boost");
  e.teacher.noise = c.get_double("teacher.noise");
  e.teacher.eos_bias = c.get_double("teacher.eos_bias");
  e.teacher.seed = derive_seed(root, "teacher");
  e.teacher_path = resolve_path(c.get("teacher.path"), base_dir);
  e.student_path = resolve_path(c.get("student.path"), base_dir);

  e.train_prompts = c.get_uint("prompts.train");
  e.eval_prompts = c.get_uint("prompts.eval");
  e.prompt_min_len = c.get_uint("prompts.min_len");
  e.prompt_max_len = c.get_uint("prompts.max_len");
  require(e.prompt_min_len <= e.prompt_max_len, "prompts.min_len", "exceeds prompts.max_len");
  e.train_prompts_file = resolve_path(c.get("prompts.train_file"), base_dir);
  e.eval_prompts_file = resolve_path(c.get("prompts.eval_file"), base_dir);
  require(e.train_prompts > 0 || !e.train_prompts_file.empty(), "prompts.train", "must be positive");

  auto& d = e.distill;
  d.seed = root;
  d.n = c.get_uint("sampling.n");
  d.temperature = c.get_double("sampling.temperature");
  require(d.temperature > 0.0, "sampling.temperature", "must be positive");
  d.max_len = c.get_uint("sampling.max_len");
  require(d.max_len >= 1, "sampling.max_len", "must be >= 1");
  d.plan.k = c.get_uint("plan.k");
  d.plan.m = c.get_uint("plan.m");
  require(d.plan.k >= 1, "plan.k", "must be >= 1");
  require(d.plan.m >= 2, "plan.m", "must be >= 2");
  require(d.n == d.plan.k * d.plan.m, "sampling.n", "must equal plan.k * plan.m");
  const auto& mode = c.get("plan.mode");
  require(mode == "fresh" || mode == "partition", "plan.mode", "must be fresh or partition");
  d.mode = mode == "fresh" ? DecompositionMode::fresh : DecompositionMode::partition;

  d.calibration.alpha = c.get_double("calibration.alpha");
  require(d.calibration.alpha >= 0.0 && d.calibration.alpha <= 1.0, "calibration.alpha",
          "must lie in [0, 1]");
  const auto& method = c.get("calibration.method");
  if (method == "mcq")
    d.calibration.method = CalibrationMethod::mcq;
  else if (method == "p_true")
    d.calibration.method = CalibrationMethod::p_true;
  else if (method == "p_true_with_ref")
    d.calibration.method = CalibrationMethod::p_true_with_ref;
  else
    require(false, "calibration.method", "must be mcq, p_true or p_true_with_ref");
  e.quality_source = c.get("calibration.quality");
  require(e.quality_source == "teacher" || e.quality_source == "table", "calibration.quality",
          "must be teacher or table");
  e.quality_scale = c.get_double("calibration.quality_scale");
  e.quality_file = resolve_path(c.get("calibration.quality_file"), base_dir);
  require(e.quality_source != "table" || !e.quality_file.empty(), "calibration.quality_file",
          "required when calibration.quality = table");
  e.reference_weight = c.get_double("calibration.reference_weight");

  const auto& objective = c.get("loss.objective");
  require(objective == "ppd" || objective == "vpd", "loss.objective", "must be ppd or vpd");
  d.loss.objective = objective == "ppd" ? Objective::ppd : Objective::vpd;
  d.loss.beta = c.get_double("loss.beta");
  require(d.loss.beta > 0.0, "loss.beta", "must be positive");
  d.loss.enumeration_cap = c.get_uint("loss.enumeration_cap");
  require(d.loss.enumeration_cap >= 2 && d.loss.enumeration_cap <= 12, "loss.enumeration_cap",
          "must be in [2, 12]");

  d.learning_rate = c.get_double("train.learning_rate");
  require(d.learning_rate >= 0.0, "train.learning_rate", "must be >= 0");
  d.steps = c.get_uint("train.steps");
  d.batch = c.get_uint("train.batch");
  require(d.batch >= 1, "train.batch", "must be >= 1");
  d.eval_every = c.get_uint("train.eval_every");
  require(d.eval_every >= 1, "train.eval_every", "must be >= 1");
  d.target_jsd = c.get_double("train.target_jsd");
  d.eval_n = c.get_uint("eval.n");
  e.log_wall_time = c.get_bool("log.wall_time");

  checked("plan.m", [&] { d.validate(); });
  return e;
}

ExperimentData materialize(const Experiment& e) {
  ExperimentData data{nullptr, ToyLm(e.teacher.vocab, e.teacher.order), {}, {}, nullptr};
  if (e.teacher_path.empty()) {
    data.teacher = std::make_shared<const ToyLm>(make_planted_teacher(e.teacher).model);
  } else {
    data.teacher = std::make_shared<const ToyLm>(load_model(e.teacher_path));
  }
  if (data.teacher->vocab_size() != e.teacher.vocab.size ||
      data.teacher->vocab().eos_id != e.teacher.vocab.eos_id)
    throw ConfigError("teacher model vocabulary does not match model.vocab / model.eos", "teacher.path");
  if (!e.student_path.empty()) {
    data.student = load_model(e.student_path);
    if (data.student.vocab_size() != data.teacher->vocab_size())
      throw ConfigError("student model vocabulary does not match the teacher", "student.path");
  } else {
    data.student = ToyLm(data.teacher->vocab(), data.teacher->order());
  }

  const auto load_prompts = [&](const std::filesystem::path& file, const char* key) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open prompts file " + file.string(), key);
    auto prompts = read_prompts(in);
    for (const auto& p : prompts) data.teacher->check_tokens(p.tokens);
    return prompts;
  };
  const std::uint64_t root = e.distill.seed;
  data.train = e.train_prompts_file.empty()
                   ? make_prompts(e.train_prompts, e.prompt_min_len, e.prompt_max_len, e.teacher.vocab,
                                  derive_seed(root, "prompts.train"), 0)
                   : load_prompts(e.train_prompts_file, "prompts.train_file");
  data.eval = e.eval_prompts_file.empty()
                  ? make_prompts(e.eval_prompts, e.prompt_min_len, e.prompt_max_len, e.teacher.vocab,
                                 derive_seed(root, "prompts.eval"), kEvalPromptIdBase)
                  : load_prompts(e.eval_prompts_file, "prompts.eval_file");

  if (e.quality_source == "table") {
    std::ifstream in(e.quality_file);
    if (!in) throw ConfigError("cannot open quality table " + e.quality_file.string(),
                               "calibration.quality_file");
    auto table = std::make_shared<const QualityTable>(QualityTable::read(in));
    data.provider = std::make_unique<QualityScoreProvider>(table_quality(table), e.reference_weight);
  } else {
    data.provider = std::make_unique<QualityScoreProvider>(likelihood_quality(data.teacher, e.quality_scale),
                                                           e.reference_weight);
  }
  return data;
}

std::string metrics_record(const RunMetrics& m, bool include_wall_time) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss ? nlohmann::ordered_json(*m.loss) : nlohmann::ordered_json(nullptr);
  j["jsd"] = m.jsd;
  j["top1"] = m.top1;
  j["kendall_tau"] = m.kendall_tau;
  if (include_wall_time) j["wall_time"] = m.wall_time;
  return j.dump();
}

namespace {

struct LoadedConfig {
  ConfigMap map;
  std::filesystem::path base_dir;
};

LoadedConfig load_config(const ExperimentSpec& spec, bool required) {
  LoadedConfig lc;
  if (spec.config.empty()) {
    if (required) throw ConfigError("--config PATH is required");
  } else {
    if (!std::filesystem::exists(spec.config))
      throw ConfigError("config file not found: " + spec.config.string());
    lc.map.load_file(spec.config);
    lc.base_dir = spec.config.parent_path();
  }
  for (const auto& o : spec.overrides) lc.map.apply_override(o);
  if (spec.seed) lc.map.set("seed", std::to_string(*spec.seed));
  return lc;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string manifest_text(const ConfigMap& map, const ExperimentSpec& spec) {
  std::ostringstream os;
  os << "# resolved configuration; `pad train --config <this file>` reproduces the run\n";
  if (!spec.config.empty()) os << "# source config: " << spec.config.string() << '\n';
  for (const auto& o : map.overrides()) os << "# override: " << o << '\n';
  const std::uint64_t root = map.get_uint("seed");
  os << "# derived seeds: teacher=" << derive_seed(root, "teacher")
     << " prompts.train=" << derive_seed(root, "prompts.train")
     << " prompts.eval=" << derive_seed(root, "prompts.eval")
     << " eval.sampling=" << derive_seed(root, "eval.sampling")
     << " eval.mapping=" << derive_seed(root, "eval.mapping") << '\n';
  map.write(os);
  return os.str();
}

// Rewrites path-valued keys as absolute so the manifest works from any directory.
void absolutize_paths(ConfigMap& map, const std::filesystem::path& base_dir) {
  for (const char* key : {"teacher.path", "student.path", "prompts.train_file", "prompts.eval_file",
                          "calibration.quality_file"}) {
    const auto p = resolve_path(map.get(key), base_dir);
    if (!p.empty()) map.set(key, std::filesystem::absolute(p).lexically_normal().string());
  }
}

int usage_error(std::ostream& err, const std::exception& e) {
  err << "error: " << e.what() << '\n';
  return kExitUsage;
}

}  // namespace

int cmd_train(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  Experiment exp;
  std::optional<ExperimentData> data;
  LoadedConfig lc;
  try {
    lc = load_config(spec, true);
    exp = resolve_experiment(lc.map, lc.base_dir);
    data.emplace(materialize(exp));
    absolutize_paths(lc.map, lc.base_dir);
    if (spec.out.empty()) throw ConfigError("--out DIR is required");
    std::filesystem::create_directories(spec.out);
  } catch (const std::exception& e) {
    return usage_error(err, e);
  }

  write_text_atomic(spec.out / "manifest.cfg", manifest_text(lc.map, spec));
  save_model_atomic(spec.out / "teacher.lm", *data->teacher);

  std::ofstream metrics(spec.out / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream timing(spec.out / "timing.jsonl", std::ios::binary | std::ios::trunc);
  const auto sink = [&](const RunMetrics& m, const ToyLm& student) {
    metrics << metrics_record(m, exp.log_wall_time) << '\n';
    metrics.flush();
    timing << "{\"step\":" << m.step << ",\"wall_time\":" << m.wall_time << "}\n";
    std::ostringstream name;
    name << "checkpoint_step" << std::setw(6) << std::setfill('0') << m.step << ".lm";
    save_model_atomic(spec.out / name.str(), student);
  };

  std::optional<TrainResult> result;
  try {
    result = iterative_distill(*data->teacher, data->student, data->train, data->eval, *data->provider,
                               exp.distill, sink);
  } catch (const std::exception& e) {
    err << "error: training failed: " << e.what() << '\n';
    return kExitUsage;
  }
  save_model_atomic(spec.out / "final.lm", result->student);

  out << "steps=" << result->steps_run;
  if (!result->metrics.empty()) {
    const RunMetrics& last = result->metrics.back();
    out << " jsd=" << last.jsd << " top1=" << last.top1 << " kendall_tau=" << last.kendall_tau;
  }
  out << " ranking_terms=" << result->ranking_terms << " skipped=" << result->skipped_steps << '\n';
  return kExitOk;
}

int cmd_eval(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    auto lc = load_config(spec, true);
    const Experiment exp = resolve_experiment(lc.map, lc.base_dir);
    ExperimentData data = materialize(exp);
    if (spec.checkpoint.empty()) throw ConfigError("--checkpoint PATH is required");
    if (!std::filesystem::exists(spec.checkpoint))
      throw ConfigError("checkpoint not found: " + spec.checkpoint.string());
    const ToyLm student = load_model(spec.checkpoint);
    const AlignmentReport r = evaluate_alignment(*data.teacher, student, data.eval, *data.provider, exp.distill);
    nlohmann::ordered_json j;
    j["checkpoint"] = spec.checkpoint.string();
    j["jsd"] = r.jsd;
    j["top1"] = r.top1;
    j["kendall_tau"] = r.kendall_tau;
    out << "jsd=" << detail::format_double(r.jsd) << " top1=" << r.top1 << " kendall_tau=" << r.kendall_tau
        << '\n';
    if (!spec.out.empty()) {
      std::filesystem::create_directories(spec.out);
      write_text_atomic(spec.out / "eval.json", j.dump() + "\n");
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return usage_error(err, e);
  }
}

int cmd_gen(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    auto lc = load_config(spec, false);
    if (spec.out.empty()) throw ConfigError("--out DIR is required");
    const Experiment exp = resolve_experiment(lc.map, lc.base_dir);
    const PlantedTeacher teacher = make_planted_teacher(exp.teacher);
    const std::uint64_t root = exp.distill.seed;
    const auto train = make_prompts(exp.train_prompts, exp.prompt_min_len, exp.prompt_max_len,
                                    exp.teacher.vocab, derive_seed(root, "prompts.train"), 0);
    const auto eval = make_prompts(exp.eval_prompts, exp.prompt_min_len, exp.prompt_max_len,
                                   exp.teacher.vocab, derive_seed(root, "prompts.eval"), kEvalPromptIdBase);
    std::filesystem::create_directories(spec.out);
    save_model_atomic(spec.out / "teacher.lm", teacher.model);

    std::ostringstream tp, ep, pool, quality, planted;
    write_prompts(tp, train);
    write_prompts(ep, eval);

    // response pool sampled from the teacher, scored by the teacher's own
    // normalized log-likelihood
    auto model = std::make_shared<const ToyLm>(teacher.model);
    const QualityFn q = likelihood_quality(model, exp.quality_scale);
    QualityTable table;
    for (const auto& p : train) {
      SamplingOptions opt;
      opt.n = exp.distill.n;
      opt.decoding = Decoding::sample(exp.distill.temperature);
      opt.max_len = exp.distill.max_len;
      opt.seed = derive_seed(derive_seed(root, "gen.pool"), p.id);
      ResponseSet set = sample_responses(teacher.model, p.tokens, opt);
      set.prompt_id = p.id;
      for (std::size_t i = 0; i < set.size(); ++i) {
        pool << p.id << ' ' << i;
        for (Token t : set.responses[i].tokens) pool << ' ' << t;
        pool << '\n';
        table.set(p.id, i, q(set, i));
      }
    }
    table.write(quality);
    for (std::size_t r = 0; r < teacher.preferred.size(); ++r) planted << r << ' ' << teacher.preferred[r] << '\n';

    write_text_atomic(spec.out / "train_prompts.txt", tp.str());
    write_text_atomic(spec.out / "eval_prompts.txt", ep.str());
    write_text_atomic(spec.out / "responses.txt", pool.str());
    write_text_atomic(spec.out / "quality.txt", quality.str());
    write_text_atomic(spec.out / "planted.txt", planted.str());

    ConfigMap fixture = lc.map;
    fixture.set("teacher.path", "teacher.lm");
    fixture.set("prompts.train_file", "train_prompts.txt");
    fixture.set("prompts.eval_file", "eval_prompts.txt");
    std::ostringstream cfg;
    cfg << "# generated fixture; paths are relative to this file\n";
    fixture.write(cfg);
    write_text_atomic(spec.out / "fixture.cfg", cfg.str());

    out << "wrote teacher.lm, train_prompts.txt, eval_prompts.txt, responses.txt, quality.txt, "
           "planted.txt, fixture.cfg to "
        << spec.out.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    return usage_error(err, e);
  }
}

int cmd_verify(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  VerifyOptions options;
  options.corrupt_gradient = spec.corrupt_gradient;
  if (spec.seed) options.seed = *spec.seed;
  std::vector<SuiteResult> results;
  try {
    results = run_verify(spec.only, options);
  } catch (const std::exception& e) {
    return usage_error(err, e);
  }
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << r.name
        << " max_error=" << std::scientific << std::setprecision(3) << r.max_error
        << " tolerance=" << r.tolerance << std::defaultfloat << "  " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitVerifyFailed;
}

}  // namespace pad
