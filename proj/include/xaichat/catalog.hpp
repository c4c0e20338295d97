#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace xaichat {

enum class Category { Filter, Prediction, Data, Meta, About, Explain, NLU, Perturbation, Logic };

enum class AttrKind {
  InstanceId,
  Count,
  TopK,
  Token,
  MethodName,
  Metric,
  MistakeMode,
  OpName,
  ExpertiseLevel,
};

using AttrValue = std::variant<std::int64_t, std::string>;

std::string_view to_string(Category c);
std::string_view to_string(AttrKind k);
std::string attr_value_string(const AttrValue& v);

// Legal values of the enum-valued kinds; empty for numeric and free-text kinds.
const std::vector<std::string>& enum_values(AttrKind kind);

inline constexpr std::string_view kAttributionMethods[] = {"input_x_gradient", "attention", "lime",
                                                           "integrated_gradient"};
inline constexpr std::string_view kMetrics[] = {"f1", "precision", "recall", "accuracy"};

// TopK default: score every token.
inline constexpr std::int64_t kAllTokens = 0;
// qatutorial level default: follow the session's expertise setting.
inline constexpr std::string_view kSessionLevel = "session";

struct AttributeSchema {
  std::string name;
  AttrKind kind;
  bool required = true;
  // Set exactly when `required` is false. Canonical rendering omits it.
  std::optional<AttrValue> default_value;
  // Value a parse repair may insert when a required attribute is missing.
  std::optional<AttrValue> repair_value;
};

struct OperationSpec {
  std::string name;
  Category category;
  std::vector<AttributeSchema> attributes;
  bool accepts_custom_input = false;
  std::string description;
  // Short human-readable subject, used in tutorial prompts ("data augmentation").
  std::string topic;

  // Operations that act on a single instance need a filter or a dialogue focus.
  [[nodiscard]] bool instance_scoped() const noexcept { return accepts_custom_input; }
  [[nodiscard]] bool is_filter() const noexcept { return category == Category::Filter; }
  [[nodiscard]] bool is_logic() const noexcept { return category == Category::Logic; }
};

class Catalog {
 public:
  // Throws Error(InvalidArgument) when the operation list breaks a catalog invariant.
  explicit Catalog(std::vector<OperationSpec> specs);

  // Throws Error(NotFound).
  [[nodiscard]] const OperationSpec& lookup(std::string_view name) const;
  [[nodiscard]] const OperationSpec* find(std::string_view name) const noexcept;

  // Excludes the logic connectives.
  [[nodiscard]] std::size_t count_operations() const noexcept;
  [[nodiscard]] const std::vector<OperationSpec>& entries() const noexcept { return specs_; }
  [[nodiscard]] std::vector<const OperationSpec*> in_category(Category c) const;
  // Operations usable as the main operation of a query (not filters, not logic).
  [[nodiscard]] std::vector<std::string> main_operation_names() const;
  // Every non-logic operation name, in catalog order.
  [[nodiscard]] std::vector<std::string> operation_names() const;

  // Structured document for the UI's operation browser.
  [[nodiscard]] std::string export_json() const;

 private:
  std::vector<OperationSpec> specs_;
};

Catalog catalog_default();

// Process-wide immutable instance of catalog_default().
const Catalog& default_catalog();

}  // namespace xaichat
