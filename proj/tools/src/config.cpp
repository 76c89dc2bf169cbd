#include "ducat/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace ducat::harness {

namespace {

constexpr int kMaxEvalSlots = 64;

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& expected) {
  throw UsageError("config key '" + key + "': cannot use '" + value + "' (" + expected + ")");
}

double as_real(const std::string& key, const std::string& v) {
  auto d = parse_number(v);
  if (!d) bad(key, v, "expected a number");
  return *d;
}

template <class T>
T as_uint(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad(key, v, "expected a non-negative integer");
  }
  return out;
}

int as_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(key, v, "expected an integer");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected true or false");
}

std::string real(double v) { return format_double(v); }
std::string boolean(bool b) { return b ? "true" : "false"; }

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + real(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Field tables.

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

struct AttackField {
  std::string name;
  std::string doc;
  std::function<void(AttackSpec&, const std::string& key, const std::string&)> set;
  std::function<std::string(const AttackSpec&)> get;
};

const std::vector<AttackField>& attack_fields() {
  static const std::vector<AttackField> fields = {
      {"name", "label used in reports",
       [](AttackSpec& a, const std::string& k, const std::string& v) {
         if (v.empty() || v.find_first_of(",\n") != std::string::npos) bad(k, v, "non-empty, no commas");
         a.name = v;
       },
       [](const AttackSpec& a) { return a.name; }},
      {"norm", "linf | l2",
       [](AttackSpec& a, const std::string& k, const std::string& v) {
         if (v == "linf") a.norm = Norm::linf;
         else if (v == "l2") a.norm = Norm::l2;
         else bad(k, v, "linf or l2");
       },
       [](const AttackSpec& a) { return std::string(a.norm == Norm::linf ? "linf" : "l2"); }},
      {"epsilon", "perturbation budget in input units",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.epsilon = as_real(k, v); },
       [](const AttackSpec& a) { return real(a.epsilon); }},
      {"step_size", "ascent step size",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.step_size = as_real(k, v); },
       [](const AttackSpec& a) { return real(a.step_size); }},
      {"steps", "ascent steps (0 = no iterations)",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.steps = as_int(k, v); },
       [](const AttackSpec& a) { return std::to_string(a.steps); }},
      {"restarts", "random restarts, >= 1",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.restarts = as_int(k, v); },
       [](const AttackSpec& a) { return std::to_string(a.restarts); }},
      {"random_start", "start from a uniform point in the ball",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.random_start = as_bool(k, v); },
       [](const AttackSpec& a) { return boolean(a.random_start); }},
      {"target_mode", "untargeted | targeted_original | targeted_dummy",
       [](AttackSpec& a, const std::string& k, const std::string& v) {
         if (v == "untargeted") a.target_mode = TargetMode::untargeted;
         else if (v == "targeted_original") a.target_mode = TargetMode::targeted_original;
         else if (v == "targeted_dummy") a.target_mode = TargetMode::targeted_dummy;
         else bad(k, v, "untargeted, targeted_original or targeted_dummy");
       },
       [](const AttackSpec& a) {
         switch (a.target_mode) {
           case TargetMode::untargeted: return std::string("untargeted");
           case TargetMode::targeted_original: return std::string("targeted_original");
           case TargetMode::targeted_dummy: return std::string("targeted_dummy");
         }
         return std::string();
       }},
      {"loss_head", "full (all 2C logits) | original (first C)",
       [](AttackSpec& a, const std::string& k, const std::string& v) {
         if (v == "full") a.loss_head = LossHead::full;
         else if (v == "original") a.loss_head = LossHead::original;
         else bad(k, v, "full or original");
       },
       [](const AttackSpec& a) { return std::string(a.loss_head == LossHead::full ? "full" : "original"); }},
      {"seed", "adversary seed",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.seed = as_uint<std::uint64_t>(k, v); },
       [](const AttackSpec& a) { return std::to_string(a.seed); }},
      {"clip", "clip adversarial inputs to [0,1]",
       [](AttackSpec& a, const std::string& k, const std::string& v) { a.clip_to_unit = as_bool(k, v); },
       [](const AttackSpec& a) { return boolean(a.clip_to_unit); }},
  };
  return fields;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f = {
        {"run.id", "run identifier written into every metrics line",
         [](RunConfig& c, const std::string& v) {
           if (v.empty() || v.find_first_of(", \t\n") != std::string::npos) bad("run.id", v, "no commas or spaces");
           c.run_id = v;
         },
         [](const RunConfig& c) { return c.run_id; }},
        {"run.out", "output directory (overridden by --out)",
         [](RunConfig& c, const std::string& v) { c.out = v; },
         [](const RunConfig& c) { return c.out.string(); }},
        {"seed", "master seed: initialisation, shuffling, training adversary, data",
         [](RunConfig& c, const std::string& v) { c.set_seed(as_uint<std::uint64_t>("seed", v)); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},

        {"data.kind", "gaussians | rings | csv",
         [](RunConfig& c, const std::string& v) {
           if (v != "gaussians" && v != "rings" && v != "csv") bad("data.kind", v, "gaussians, rings or csv");
           c.data.kind = v;
         },
         [](const RunConfig& c) { return c.data.kind; }},
        {"data.seed", "dataset seed; empty follows `seed`",
         [](RunConfig& c, const std::string& v) {
           if (v.empty()) c.data.seed.reset();
           else c.data.seed = as_uint<std::uint64_t>("data.seed", v);
         },
         [](const RunConfig& c) { return c.data.seed ? std::to_string(*c.data.seed) : std::string(); }},
        {"data.classes", "gaussians: number of classes",
         [](RunConfig& c, const std::string& v) { c.data.gaussians.num_classes = as_uint<std::size_t>("data.classes", v); },
         [](const RunConfig& c) { return std::to_string(c.data.gaussians.num_classes); }},
        {"data.dim", "gaussians: input dimension",
         [](RunConfig& c, const std::string& v) { c.data.gaussians.dim = as_uint<std::size_t>("data.dim", v); },
         [](const RunConfig& c) { return std::to_string(c.data.gaussians.dim); }},
        {"data.per_class", "training samples per class",
         [](RunConfig& c, const std::string& v) {
           c.data.gaussians.per_class = c.data.rings.per_class = as_uint<std::size_t>("data.per_class", v);
         },
         [](const RunConfig& c) { return std::to_string(c.data.gaussians.per_class); }},
        {"data.test_per_class", "test samples per class",
         [](RunConfig& c, const std::string& v) { c.data.test_per_class = as_uint<std::size_t>("data.test_per_class", v); },
         [](const RunConfig& c) { return std::to_string(c.data.test_per_class); }},
        {"data.separation", "gaussians: minimum centre distance",
         [](RunConfig& c, const std::string& v) { c.data.gaussians.separation = as_real("data.separation", v); },
         [](const RunConfig& c) { return real(c.data.gaussians.separation); }},
        {"data.noise", "gaussian sigma / ring radial noise",
         [](RunConfig& c, const std::string& v) {
           c.data.gaussians.noise_sigma = c.data.rings.noise = as_real("data.noise", v);
         },
         [](const RunConfig& c) { return real(c.data.gaussians.noise_sigma); }},
        {"data.radii", "rings: comma-separated, strictly increasing",
         [](RunConfig& c, const std::string& v) { c.data.rings.radii = parse_number_list(v, "data.radii"); },
         [](const RunConfig& c) { return join_reals(c.data.rings.radii); }},
        {"data.rescale", "affine rescale of features into [0,1]",
         [](RunConfig& c, const std::string& v) {
           c.data.gaussians.rescale = c.data.rings.rescale = as_bool("data.rescale", v);
         },
         [](const RunConfig& c) { return boolean(c.data.gaussians.rescale); }},
        {"data.train_csv", "csv: training file",
         [](RunConfig& c, const std::string& v) { c.data.train_csv = v; },
         [](const RunConfig& c) { return c.data.train_csv.string(); }},
        {"data.test_csv", "csv: test file",
         [](RunConfig& c, const std::string& v) { c.data.test_csv = v; },
         [](const RunConfig& c) { return c.data.test_csv.string(); }},

        {"train.method", "pgd_at | ducat | ducat_hard_toy",
         [](RunConfig& c, const std::string& v) {
           if (v == "pgd_at") c.train.method = Method::pgd_at;
           else if (v == "ducat") c.train.method = Method::ducat;
           else if (v == "ducat_hard_toy") c.train.method = Method::ducat_hard_toy;
           else bad("train.method", v, "pgd_at, ducat or ducat_hard_toy");
         },
         [](const RunConfig& c) { return to_string(c.train.method); }},
        {"train.epochs", "total epochs T",
         [](RunConfig& c, const std::string& v) { c.train.epochs = as_int("train.epochs", v); },
         [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
        {"train.resume_epoch", "epoch to continue from (with train.init_checkpoint)",
         [](RunConfig& c, const std::string& v) { c.train.resume_epoch = as_int("train.resume_epoch", v); },
         [](const RunConfig& c) { return std::to_string(c.train.resume_epoch); }},
        {"train.init_checkpoint", "checkpoint to resume from; empty trains from scratch",
         [](RunConfig& c, const std::string& v) { c.init_checkpoint = v; },
         [](const RunConfig& c) { return c.init_checkpoint.string(); }},
        {"train.batch_size", "mini-batch size",
         [](RunConfig& c, const std::string& v) { c.train.batch_size = as_uint<std::size_t>("train.batch_size", v); },
         [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
        {"train.hidden", "comma-separated hidden widths",
         [](RunConfig& c, const std::string& v) {
           c.train.hidden.clear();
           for (const auto& part : split(v, ',')) c.train.hidden.push_back(as_uint<std::size_t>("train.hidden", part));
         },
         [](const RunConfig& c) {
           std::string out;
           for (std::size_t i = 0; i < c.train.hidden.size(); ++i) out += (i ? "," : "") + std::to_string(c.train.hidden[i]);
           return out;
         }},
        {"train.lr", "initial learning rate",
         [](RunConfig& c, const std::string& v) { c.train.schedule.initial = as_real("train.lr", v); },
         [](const RunConfig& c) { return real(c.train.schedule.initial); }},
        {"train.lr_decays", "epoch:factor pairs, comma-separated, e.g. 40:0.1,50:0.1",
         [](RunConfig& c, const std::string& v) {
           std::vector<std::pair<int, double>> decays;
           for (const auto& part : split(v, ',')) {
             const auto colon = part.find(':');
             if (colon == std::string::npos) bad("train.lr_decays", v, "epoch:factor pairs");
             const int at = as_int("train.lr_decays", trim(std::string_view(part).substr(0, colon)));
             const double f = as_real("train.lr_decays", trim(std::string_view(part).substr(colon + 1)));
             if (!decays.empty() && at < decays.back().first) bad("train.lr_decays", v, "non-decreasing epochs");
             decays.emplace_back(at, f);
           }
           c.train.schedule.decays = std::move(decays);
         },
         [](const RunConfig& c) {
           std::string out;
           for (std::size_t i = 0; i < c.train.schedule.decays.size(); ++i) {
             out += (i ? "," : "") + std::to_string(c.train.schedule.decays[i].first) + ":" +
                    real(c.train.schedule.decays[i].second);
           }
           return out;
         }},
        {"train.momentum", "SGD momentum",
         [](RunConfig& c, const std::string& v) { c.train.momentum = as_real("train.momentum", v); },
         [](const RunConfig& c) { return real(c.train.momentum); }},
        {"train.weight_decay", "L2 weight decay",
         [](RunConfig& c, const std::string& v) { c.train.weight_decay = as_real("train.weight_decay", v); },
         [](const RunConfig& c) { return real(c.train.weight_decay); }},
        {"train.dummy_init", "fresh | copy_with_noise: initialisation of the dummy rows",
         [](RunConfig& c, const std::string& v) {
           if (v == "fresh") c.train.dummy_init = DummyInit::fresh;
           else if (v == "copy_with_noise") c.train.dummy_init = DummyInit::copy_with_noise;
           else bad("train.dummy_init", v, "fresh or copy_with_noise");
         },
         [](const RunConfig& c) {
           return std::string(c.train.dummy_init == DummyInit::fresh ? "fresh" : "copy_with_noise");
         }},
        {"train.eval_each_epoch", "also run the eval adversaries every epoch (reporting only)",
         [](RunConfig& c, const std::string& v) { c.train.eval_each_epoch = as_bool("train.eval_each_epoch", v); },
         [](const RunConfig& c) { return boolean(c.train.eval_each_epoch); }},

        {"ducat.alpha", "weight of the benign term",
         [](RunConfig& c, const std::string& v) { c.train.hyper.alpha = as_real("ducat.alpha", v); },
         [](const RunConfig& c) { return real(c.train.hyper.alpha); }},
        {"ducat.beta1", "benign mass on the original class",
         [](RunConfig& c, const std::string& v) { c.train.hyper.beta1 = as_real("ducat.beta1", v); },
         [](const RunConfig& c) { return real(c.train.hyper.beta1); }},
        {"ducat.beta2", "adversarial mass on the dummy class",
         [](RunConfig& c, const std::string& v) { c.train.hyper.beta2 = as_real("ducat.beta2", v); },
         [](const RunConfig& c) { return real(c.train.hyper.beta2); }},
        {"ducat.start_epoch", "epoch t at which dummy classes switch on",
         [](RunConfig& c, const std::string& v) { c.train.hyper.start_epoch = as_int("ducat.start_epoch", v); },
         [](const RunConfig& c) { return std::to_string(c.train.hyper.start_epoch); }},

        {"budget.step_ratio", "budget-sweep step size as a fraction of epsilon",
         [](RunConfig& c, const std::string& v) { c.budget_step_ratio = as_real("budget.step_ratio", v); },
         [](const RunConfig& c) { return real(c.budget_step_ratio); }},
    };
    for (const auto& af : attack_fields()) {
      const std::string key = "attack." + af.name;
      f.push_back({key, "training adversary: " + af.doc,
                   [af, key](RunConfig& c, const std::string& v) { af.set(c.train.train_attack, key, v); },
                   [af](const RunConfig& c) { return af.get(c.train.train_attack); }});
    }
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

struct EvalKey {
  std::size_t index;
  const AttackField* field;
};

std::optional<EvalKey> parse_eval_key(const std::string& key) {
  if (key.rfind("eval.", 0) != 0) return std::nullopt;
  const auto dot = key.find('.', 5);
  if (dot == std::string::npos) return std::nullopt;
  const std::string idx = key.substr(5, dot - 5);
  std::size_t n = 0;
  auto res = std::from_chars(idx.data(), idx.data() + idx.size(), n);
  if (idx.empty() || res.ec != std::errc() || res.ptr != idx.data() + idx.size()) return std::nullopt;
  if (n >= kMaxEvalSlots) return std::nullopt;
  const std::string name = key.substr(dot + 1);
  for (const auto& af : attack_fields()) {
    if (af.name == name) return EvalKey{n, &af};
  }
  return std::nullopt;
}

AttackSpec default_eval_spec(std::size_t index) {
  AttackSpec a = make_pgd(8.0 / 255.0, 2.0 / 255.0, 10);
  a.name = "eval" + std::to_string(index);
  return a;
}

void apply(RunConfig& c, const std::string& key, const std::string& value) {
  if (const Field* f = find_field(key)) {
    f->set(c, value);
    return;
  }
  if (auto ek = parse_eval_key(key)) {
    auto& evals = c.train.eval_attacks;
    while (evals.size() <= ek->index) evals.push_back(default_eval_spec(evals.size()));
    ek->field->set(evals[ek->index], key, value);
    return;
  }
  throw UsageError("unknown config key '" + key + "'");
}

void check_consistency(const RunConfig& c) {
  try {
    c.train.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  if (c.data.kind == "csv" && (c.data.train_csv.empty() || c.data.test_csv.empty())) {
    throw UsageError("data.kind = csv needs data.train_csv and data.test_csv");
  }
  if (c.train.resume_epoch > 0 && c.init_checkpoint.empty()) {
    throw UsageError("train.resume_epoch > 0 needs train.init_checkpoint");
  }
  if (!(c.budget_step_ratio > 0.0)) throw UsageError("budget.step_ratio must be > 0");
}

RunConfig build(const std::vector<std::pair<std::string, std::string>>& entries, const EnvLookup& env) {
  RunConfig c;
  std::map<std::string, std::string> values;
  std::vector<std::string> order;
  for (const auto& [k, v] : entries) {
    if (!values.emplace(k, v).second) throw UsageError("duplicate config key '" + k + "'");
    order.push_back(k);
  }
  // Environment overrides, checked against every known key and eval slot.
  std::vector<std::string> candidates;
  for (const auto& f : fields()) candidates.push_back(f.key);
  for (int i = 0; i < kMaxEvalSlots; ++i) {
    for (const auto& af : attack_fields()) candidates.push_back("eval." + std::to_string(i) + "." + af.name);
  }
  for (const auto& key : candidates) {
    if (auto v = env(env_name(key))) {
      if (!values.count(key)) order.push_back(key);
      values[key] = trim(*v);
    }
  }
  // `seed` first so that an explicit attack.seed or data.seed wins.
  std::stable_sort(order.begin(), order.end(),
                   [](const std::string& a, const std::string& b) { return a == "seed" && b != "seed"; });
  for (const auto& key : order) apply(c, key, values.at(key));
  check_consistency(c);
  return c;
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

EnvLookup no_env() {
  return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(*this) << '\n';
  for (std::size_t i = 0; i < train.eval_attacks.size(); ++i) {
    for (const auto& af : attack_fields()) {
      out << "eval." << i << '.' << af.name << " = " << af.get(train.eval_attacks[i]) << '\n';
    }
  }
  return out.str();
}

std::vector<KeyDoc> documented_keys() {
  std::vector<KeyDoc> out;
  for (const auto& f : fields()) out.push_back({f.key, f.doc});
  for (const auto& af : attack_fields()) out.push_back({"eval.N." + af.name, "held-out adversary N: " + af.doc});
  return out;
}

std::string env_name(std::string_view key) {
  std::string out = "DUCAT_";
  for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

RunConfig parse_config(std::string_view text, const std::string& origin, const EnvLookup& env) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    entries.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return build(entries, env);
}

RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), env);
}

RunConfig default_config(const EnvLookup& env) { return build({}, env); }

std::optional<double> parse_number(std::string_view s) {
  const std::string t = trim(s);
  const auto slash = t.find('/');
  if (slash == std::string::npos) return parse_double(t);
  const auto num = parse_double(std::string_view(t).substr(0, slash));
  const auto den = parse_double(std::string_view(t).substr(slash + 1));
  if (!num || !den || *den == 0.0) return std::nullopt;
  return *num / *den;
}

std::vector<double> parse_number_list(std::string_view s, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    auto v = parse_number(part);
    if (!v) throw UsageError(what + ": cannot parse '" + part + "' as a number");
    out.push_back(*v);
  }
  return out;
}

DataSplits make_datasets(const DataConfig& data, std::uint64_t seed) {
  DataSplits s;
  if (data.kind == "gaussians") {
    GaussianSpec spec = data.gaussians;
    s.train = gen_gaussians(spec, seed, Split::train);
    spec.per_class = data.test_per_class;
    s.test = gen_gaussians(spec, seed, Split::test);
  } else if (data.kind == "rings") {
    RingSpec spec = data.rings;
    s.train = gen_rings(spec, seed, Split::train);
    spec.per_class = data.test_per_class;
    s.test = gen_rings(spec, seed, Split::test);
  } else {
    s.train = load_csv(data.train_csv);
    s.test = load_csv(data.test_csv, s.train.num_classes);
    s.train.split = Split::train;
    s.test.split = Split::test;
    if (s.test.dim != s.train.dim) throw DatasetError("train and test CSV widths differ");
  }
  return s;
}

}  // namespace ducat::harness
