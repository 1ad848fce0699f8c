#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace precrash::study {

class StudyError : public std::runtime_error {
 public:
  enum class Kind {
    Syntax,
    InvalidValue,
    ItemMismatch,
    DegenerateSample,
    TooFewObservations,
    LengthMismatch,
    InvalidChoice,
  };
  StudyError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(StudyError::Kind kind);

// ---------------------------------------------------------------- sickness

enum class Category { Nausea, Oculomotor, Disorientation, Experience };

std::string_view to_string(Category c);
std::optional<Category> category_from(std::string_view text);

struct ItemScore {
  std::string item_id;
  Category category = Category::Experience;
  double score = 0.0;  // clamped to [0, 10] at ingestion
};

struct QuestionnaireResponse {
  std::string participant_id;
  std::string stage;  // pre | post
  std::string simulator;
  std::vector<ItemScore> items;
};

struct SicknessScores {
  double nausea = 0.0;
  double oculomotor = 0.0;
  double disorientation = 0.0;
  double total = 0.0;
};

/// Category means of the per-item increases max(0, post - pre). Experience
/// items are ignored; a category without items scores 0. ItemMismatch when
/// the two responses do not rate the same sickness items.
SicknessScores sickness_scores(const QuestionnaireResponse& pre, const QuestionnaireResponse& post);

/// Parses a responses document; scores are clamped into [0, 10] and
/// (participant, stage, simulator) must be unique.
std::vector<QuestionnaireResponse> parse_responses(const nlohmann::json& doc);

struct SicknessRow {
  std::string participant_id;
  std::string simulator;
  SicknessScores scores;
};

/// One row per (participant, simulator) that has both a pre and a post
/// response, ordered by simulator then participant.
std::vector<SicknessRow> sickness_table(const std::vector<QuestionnaireResponse>& responses);

// -------------------------------------------------------------- statistics

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction
/// (300 iterations at most, 1e-14 term tolerance).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t: 2 (1 - F(|t|; df)).
double two_sided_p(double t, double df);

struct TestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  bool reject_h0 = false;  // p_value < alpha
  double alpha = 0.05;
};

/// Decision rule shared by both tests.
bool reject(double p_value, double alpha);

/// Unequal-variance two-sample test (Welch-Satterthwaite degrees of freedom).
TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha = 0.05);

/// Test on the element-wise differences a[i] - b[i].
TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha = 0.05);

/// Numeric column of a CSV document, selected by header name.
std::vector<double> csv_column(std::string_view csv_text, std::string_view column);

// ---------------------------------------------------------------- fidelity

enum class MotionBase { None, ThreeDof, SixDofPlus };
enum class Visual { SingleFlat, TripleFlat, SurroundOrHmd };
enum class ControlSet { KeyboardOrGamepad, WheelWithSeat, FullCab };

struct FidelityConfig {
  MotionBase motion_base = MotionBase::None;
  Visual visual = Visual::SingleFlat;
  ControlSet controls = ControlSet::KeyboardOrGamepad;
};

inline constexpr int kFidelityMax = 15;

int fidelity_score(const FidelityConfig& config);

std::optional<MotionBase> motion_from(std::string_view text);
std::optional<Visual> visual_from(std::string_view text);
std::optional<ControlSet> controls_from(std::string_view text);

// ------------------------------------------------------------- preferences

/// The comparison criteria of the final questionnaire.
inline constexpr std::string_view kCriteria[] = {"visual_representation", "audio_representation",
                                                 "control_responsiveness", "immersion",
                                                 "frame_rate", "recommendation"};

struct FinalResponse {
  std::string participant_id;
  std::map<std::string, std::string> choices;  // criterion -> simulator
};

struct PreferenceTally {
  std::vector<std::string> simulators;
  std::size_t responses = 0;
  std::map<std::string, std::map<std::string, std::size_t>> counts;  // criterion -> simulator -> count
  /// Share of responses per simulator; none without responses.
  std::optional<double> proportion(const std::string& criterion, const std::string& simulator) const;
};

/// Every response must pick one of `simulators` for every criterion
/// (InvalidChoice otherwise).
PreferenceTally preference_tally(const std::vector<std::string>& simulators, const std::vector<FinalResponse>& responses);

struct FinalDocument {
  std::vector<std::string> simulators;
  std::vector<FinalResponse> responses;
};
FinalDocument parse_final(const nlohmann::json& doc);

// ------------------------------------------------------------ JSON results

nlohmann::ordered_json to_json(const SicknessScores& s);
nlohmann::ordered_json to_json(const TestResult& r);
nlohmann::ordered_json to_json(const PreferenceTally& t);

}  // namespace precrash::study
