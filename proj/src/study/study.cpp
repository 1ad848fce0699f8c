#include "precrash/study/study.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

namespace precrash::study {

using nlohmann::json;
using Kind = StudyError::Kind;

namespace {

constexpr int kMaxIterations = 300;
constexpr double kTermTolerance = 1e-14;
constexpr double kTiny = 1e-300;

[[noreturn]] void fail(Kind kind, const std::string& message) { throw StudyError(kind, message); }

double log_gamma(double x) {
  int sign = 0;
  return lgamma_r(x, &sign);
}

// Continued fraction of I_x(a, b) (modified Lentz).
double beta_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kTermTolerance) break;
  }
  return h;
}

// Standard deviations below this fraction of the data magnitude are rounding noise.
constexpr double kSpreadFloor = 64.0 * std::numeric_limits<double>::epsilon();

double magnitude(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  for (double x : b) m = std::max(m, std::abs(x));
  return m;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

void check_finite(const std::vector<double>& v, const char* name) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(Kind::InvalidValue, std::string("sample ") + name + " holds a non-finite value");
  }
}

TestResult finish(double t, double df, double alpha) {
  TestResult r;
  r.t_statistic = t;
  r.degrees_of_freedom = df;
  r.p_value = two_sided_p(t, df);
  r.alpha = alpha;
  r.reject_h0 = reject(r.p_value, alpha);
  return r;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Kind::InvalidValue, "alpha must be in (0, 1)");
}

const json& member(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(Kind::Syntax, where + ": missing '" + key + "'");
  return j.at(key);
}

std::string text(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  if (!v.is_string()) fail(Kind::Syntax, where + "." + key + ": expected a string");
  return v.get<std::string>();
}

void check_version(const json& doc) {
  const json& v = member(doc, "format_version", "document");
  if (!v.is_number_integer() || v.get<int>() != 1) fail(Kind::InvalidValue, "unsupported format_version");
}

}  // namespace

std::string_view to_string(StudyError::Kind kind) {
  switch (kind) {
    case Kind::Syntax: return "Syntax";
    case Kind::InvalidValue: return "InvalidValue";
    case Kind::ItemMismatch: return "ItemMismatch";
    case Kind::DegenerateSample: return "DegenerateSample";
    case Kind::TooFewObservations: return "TooFewObservations";
    case Kind::LengthMismatch: return "LengthMismatch";
    case Kind::InvalidChoice: return "InvalidChoice";
  }
  return "Syntax";
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Nausea: return "nausea";
    case Category::Oculomotor: return "oculomotor";
    case Category::Disorientation: return "disorientation";
    case Category::Experience: return "experience";
  }
  return "experience";
}

std::optional<Category> category_from(std::string_view text) {
  for (Category c : {Category::Nausea, Category::Oculomotor, Category::Disorientation, Category::Experience}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

SicknessScores sickness_scores(const QuestionnaireResponse& pre, const QuestionnaireResponse& post) {
  std::map<std::string, const ItemScore*> before;
  for (const ItemScore& i : pre.items) {
    if (i.category != Category::Experience) before[i.item_id] = &i;
  }
  double sum[3] = {0.0, 0.0, 0.0};
  int count[3] = {0, 0, 0};
  std::size_t matched = 0;
  for (const ItemScore& i : post.items) {
    if (i.category == Category::Experience) continue;
    auto it = before.find(i.item_id);
    if (it == before.end() || it->second->category != i.category) {
      fail(Kind::ItemMismatch, "item '" + i.item_id + "' is not rated identically before and after");
    }
    ++matched;
    const double delta = std::max(0.0, i.score - it->second->score);
    sum[static_cast<int>(i.category)] += delta;
    ++count[static_cast<int>(i.category)];
  }
  if (matched != before.size()) fail(Kind::ItemMismatch, "pre and post responses rate different item sets");
  if (matched == 0) fail(Kind::ItemMismatch, "no sickness items");
  SicknessScores s;
  const auto avg = [&](int k) { return count[k] ? sum[k] / count[k] : 0.0; };
  s.nausea = avg(0);
  s.oculomotor = avg(1);
  s.disorientation = avg(2);
  s.total = (sum[0] + sum[1] + sum[2]) / static_cast<double>(matched);
  return s;
}

std::vector<QuestionnaireResponse> parse_responses(const json& doc) {
  check_version(doc);
  const json& list = member(doc, "responses", "document");
  if (!list.is_array()) fail(Kind::Syntax, "responses: expected an array");
  std::vector<QuestionnaireResponse> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (std::size_t n = 0; n < list.size(); ++n) {
    const std::string where = "responses[" + std::to_string(n) + "]";
    const json& r = list[n];
    QuestionnaireResponse q;
    q.participant_id = text(r, "participant_id", where);
    q.stage = text(r, "stage", where);
    if (q.stage != "pre" && q.stage != "post") fail(Kind::InvalidValue, where + ": stage must be pre or post");
    q.simulator = text(r, "simulator", where);
    if (!seen.emplace(q.participant_id, q.stage, q.simulator).second) {
      fail(Kind::InvalidValue, where + ": duplicate (participant, stage, simulator)");
    }
    const json& items = member(r, "items", where);
    if (!items.is_array()) fail(Kind::Syntax, where + ".items: expected an array");
    std::set<std::string> ids;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const std::string iw = where + ".items[" + std::to_string(k) + "]";
      ItemScore item;
      item.item_id = text(items[k], "item_id", iw);
      const auto cat = category_from(text(items[k], "category", iw));
      if (!cat) fail(Kind::InvalidValue, iw + ": unknown category");
      item.category = *cat;
      const json& score = member(items[k], "score", iw);
      if (!score.is_number() || !std::isfinite(score.get<double>())) fail(Kind::Syntax, iw + ".score: expected a number");
      item.score = std::clamp(score.get<double>(), 0.0, 10.0);
      if (!ids.insert(item.item_id).second) fail(Kind::InvalidValue, iw + ": duplicate item id");
      q.items.push_back(std::move(item));
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<SicknessRow> sickness_table(const std::vector<QuestionnaireResponse>& responses) {
  std::map<std::pair<std::string, std::string>, std::pair<const QuestionnaireResponse*, const QuestionnaireResponse*>>
      pairs;  // (simulator, participant) -> (pre, post)
  for (const QuestionnaireResponse& r : responses) {
    auto& slot = pairs[{r.simulator, r.participant_id}];
    (r.stage == "pre" ? slot.first : slot.second) = &r;
  }
  std::vector<SicknessRow> rows;
  for (const auto& [key, pp] : pairs) {
    if (!pp.first || !pp.second) continue;
    rows.push_back({key.second, key.first, sickness_scores(*pp.first, *pp.second)});
  }
  return rows;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) fail(Kind::InvalidValue, "incomplete_beta: bad arguments");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double two_sided_p(double t, double df) {
  if (!(df > 0.0) || std::isnan(t)) fail(Kind::InvalidValue, "two_sided_p: bad arguments");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

bool reject(double p_value, double alpha) { return p_value < alpha; }

TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
  check_alpha(alpha);
  if (a.size() < 2 || b.size() < 2) fail(Kind::TooFewObservations, "each sample needs at least two observations");
  check_finite(a, "a");
  check_finite(b, "b");
  const double ma = mean(a);
  const double mb = mean(b);
  const double va = variance(a, ma) / static_cast<double>(a.size());
  const double vb = variance(b, mb) / static_cast<double>(b.size());
  if (!(std::sqrt(va) > kSpreadFloor * magnitude(a, a)) || !(std::sqrt(vb) > kSpreadFloor * magnitude(b, b))) fail(Kind::DegenerateSample, "a sample has zero variance");
  const double se2 = va + vb;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  return finish(t, df, alpha);
}

TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
  check_alpha(alpha);
  if (a.size() != b.size()) fail(Kind::LengthMismatch, "paired samples differ in length");
  if (a.size() < 2) fail(Kind::TooFewObservations, "paired test needs at least two pairs");
  check_finite(a, "a");
  check_finite(b, "b");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double md = mean(d);
  const double vd = variance(d, md);
  if (!(std::sqrt(vd) > kSpreadFloor * magnitude(a, b))) {
    fail(Kind::DegenerateSample, "paired differences have zero variance");
  }
  const double n = static_cast<double>(d.size());
  return finish(md / std::sqrt(vd / n), n - 1.0, alpha);
}

std::vector<double> csv_column(std::string_view csv_text, std::string_view column) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < csv_text.size(); ++i) {
    const char c = csv_text[i];
    if (quoted) {
      if (c == '"' && i + 1 < csv_text.size() && csv_text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < csv_text.size() && csv_text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(Kind::Syntax, "empty CSV");
  const auto& header = rows.front();
  const auto col = std::find(header.begin(), header.end(), column);
  if (col == header.end()) fail(Kind::InvalidValue, "CSV has no column '" + std::string(column) + "'");
  const std::size_t k = static_cast<std::size_t>(col - header.begin());
  std::vector<double> values;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (k >= rows[r].size() || rows[r][k].empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rows[r][k], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rows[r][k].size()) fail(Kind::Syntax, "row " + std::to_string(r + 1) + ": not a number");
    values.push_back(v);
  }
  return values;
}

int fidelity_score(const FidelityConfig& c) {
  static constexpr int kMotion[] = {1, 3, 5};
  static constexpr int kVisual[] = {2, 3, 5};
  static constexpr int kControls[] = {1, 3, 5};
  return kMotion[static_cast<int>(c.motion_base)] + kVisual[static_cast<int>(c.visual)] +
         kControls[static_cast<int>(c.controls)];
}

std::optional<MotionBase> motion_from(std::string_view t) {
  if (t == "none") return MotionBase::None;
  if (t == "three_dof") return MotionBase::ThreeDof;
  if (t == "six_dof_plus") return MotionBase::SixDofPlus;
  return std::nullopt;
}

std::optional<Visual> visual_from(std::string_view t) {
  if (t == "single_flat") return Visual::SingleFlat;
  if (t == "triple_flat") return Visual::TripleFlat;
  if (t == "surround_or_hmd") return Visual::SurroundOrHmd;
  return std::nullopt;
}

std::optional<ControlSet> controls_from(std::string_view t) {
  if (t == "keyboard_or_gamepad") return ControlSet::KeyboardOrGamepad;
  if (t == "wheel_with_seat") return ControlSet::WheelWithSeat;
  if (t == "full_cab") return ControlSet::FullCab;
  return std::nullopt;
}

std::optional<double> PreferenceTally::proportion(const std::string& criterion, const std::string& simulator) const {
  if (responses == 0) return std::nullopt;
  auto c = counts.find(criterion);
  if (c == counts.end()) return std::nullopt;
  auto s = c->second.find(simulator);
  const std::size_t n = s == c->second.end() ? 0 : s->second;
  return static_cast<double>(n) / static_cast<double>(responses);
}

PreferenceTally preference_tally(const std::vector<std::string>& simulators,
                                 const std::vector<FinalResponse>& responses) {
  if (simulators.size() < 2) fail(Kind::InvalidValue, "at least two simulators are compared");
  if (std::set<std::string>(simulators.begin(), simulators.end()).size() != simulators.size()) {
    fail(Kind::InvalidValue, "duplicate simulator label");
  }
  PreferenceTally t;
  t.simulators = simulators;
  for (const FinalResponse& r : responses) {
    if (r.choices.size() != std::size(kCriteria)) {
      fail(Kind::InvalidChoice, r.participant_id + ": one choice per criterion is required");
    }
    for (std::string_view criterion : kCriteria) {
      auto it = r.choices.find(std::string(criterion));
      if (it == r.choices.end()) {
        fail(Kind::InvalidChoice, r.participant_id + ": no choice for " + std::string(criterion));
      }
      if (std::find(simulators.begin(), simulators.end(), it->second) == simulators.end()) {
        fail(Kind::InvalidChoice, r.participant_id + ": unknown simulator '" + it->second + "'");
      }
    }
  }
  if (responses.empty()) return t;
  for (std::string_view criterion : kCriteria) {
    auto& row = t.counts[std::string(criterion)];
    for (const std::string& s : simulators) row[s] = 0;
  }
  for (const FinalResponse& r : responses) {
    for (const auto& [criterion, sim] : r.choices) ++t.counts[criterion][sim];
  }
  t.responses = responses.size();
  return t;
}

FinalDocument parse_final(const json& doc) {
  check_version(doc);
  FinalDocument out;
  const json& sims = member(doc, "simulators", "document");
  if (!sims.is_array()) fail(Kind::Syntax, "simulators: expected an array");
  for (const json& s : sims) {
    if (!s.is_string()) fail(Kind::Syntax, "simulators: expected strings");
    out.simulators.push_back(s.get<std::string>());
  }
  const json& list = member(doc, "responses", "document");
  if (!list.is_array()) fail(Kind::Syntax, "responses: expected an array");
  for (std::size_t n = 0; n < list.size(); ++n) {
    const std::string where = "responses[" + std::to_string(n) + "]";
    FinalResponse r;
    r.participant_id = text(list[n], "participant_id", where);
    const json& choices = member(list[n], "choices", where);
    if (!choices.is_object()) fail(Kind::Syntax, where + ".choices: expected an object");
    for (auto it = choices.begin(); it != choices.end(); ++it) {
      if (!it.value().is_string()) fail(Kind::InvalidChoice, where + ": choice must name a simulator");
      if (std::find(std::begin(kCriteria), std::end(kCriteria), it.key()) == std::end(kCriteria)) {
        fail(Kind::InvalidChoice, where + ": unknown criterion '" + it.key() + "'");
      }
      r.choices[it.key()] = it.value().get<std::string>();
    }
    out.responses.push_back(std::move(r));
  }
  return out;
}

nlohmann::ordered_json to_json(const SicknessScores& s) {
  return {{"nausea", s.nausea}, {"oculomotor", s.oculomotor}, {"disorientation", s.disorientation}, {"total", s.total}};
}

nlohmann::ordered_json to_json(const TestResult& r) {
  return {{"t_statistic", r.t_statistic},
          {"degrees_of_freedom", r.degrees_of_freedom},
          {"p_value", r.p_value},
          {"reject_h0", r.reject_h0},
          {"alpha", r.alpha}};
}

nlohmann::ordered_json to_json(const PreferenceTally& t) {
  nlohmann::ordered_json j;
  j["responses"] = t.responses;
  j["simulators"] = t.simulators;
  nlohmann::ordered_json criteria = nlohmann::ordered_json::object();
  for (std::string_view c : kCriteria) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (const std::string& s : t.simulators) {
      const auto p = t.proportion(std::string(c), s);
      std::size_t n = 0;
      if (auto it = t.counts.find(std::string(c)); it != t.counts.end()) n = it->second.at(s);
      row[s] = {{"count", n}, {"proportion", p ? nlohmann::ordered_json(*p) : nlohmann::ordered_json(nullptr)}};
    }
    criteria[std::string(c)] = std::move(row);
  }
  j["criteria"] = std::move(criteria);
  return j;
}

}  // namespace precrash::study
