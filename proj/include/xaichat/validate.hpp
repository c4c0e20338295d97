#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "xaichat/catalog.hpp"
#include "xaichat/query.hpp"

namespace xaichat {

struct ValidationContext {
  // Dataset ids are 0..dataset_size-1.
  std::int64_t dataset_size = 0;
  // Custom inputs live above the dataset range.
  std::vector<std::int64_t> custom_input_ids;
  // True when the dialogue already focuses an instance, so instance operations may omit filters.
  bool focus_available = false;

  // Accepts any id and any count; used for context-free checks (rendering, gold files).
  static ValidationContext unbounded();
};

enum class ViolationKind {
  PureFilter,
  UnknownOperation,
  BadAttribute,
  IdOutOfRange,
  OrOutsideFilters,
  NoInstanceInScope,
  EmptyToken,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
  [[nodiscard]] bool has(ViolationKind kind) const noexcept;
  [[nodiscard]] std::string summary() const;
};

ValidationReport validate(const QueryAst& ast, const Catalog& catalog,
                          const ValidationContext& context);

// Context with ids 0..dataset_size-1, no custom inputs and no dialogue focus.
ValidationReport validate(const QueryAst& ast, const Catalog& catalog, std::int64_t dataset_size);

// Largest value a Count attribute may take for a dataset of this size.
std::int64_t count_limit(std::int64_t dataset_size) noexcept;

}  // namespace xaichat
