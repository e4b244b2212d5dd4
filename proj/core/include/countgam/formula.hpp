#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace countgam {

enum class Family { NegBin, Poisson };

enum class OffsetKind { PersonYears100k, None, Column };

struct OffsetRule {
  OffsetKind kind = OffsetKind::PersonYears100k;
  std::string column;  // used when kind == Column
  bool operator==(const OffsetRule&) const = default;
};

enum class SmoothKind { S, TE };

// One smooth term of the model formula.  Variables are partitioned into
// anisotropy groups by d_groups (e.g. d=c(2,1) over (lat,lon,time) puts
// lat/lon in one group and time in another); each group gets one smoothing
// parameter.  basis_dims holds one entry per group: the marginal basis
// dimension for a 1-variable group, or the per-axis dimension for a
// 2-variable group.
struct SmoothTerm {
  SmoothKind kind = SmoothKind::S;
  std::vector<std::string> variables;
  std::vector<int> d_groups;
  std::vector<int> basis_dims;
  bool operator==(const SmoothTerm&) const = default;
};

struct ModelSpec {
  std::string response;
  std::vector<std::string> parametric_terms;
  std::vector<SmoothTerm> smooth_terms;
  Family family = Family::NegBin;
  OffsetRule offset;
  bool operator==(const ModelSpec&) const = default;
};

// Parse failure with the byte offset into the formula text where the
// problem was detected.
class FormulaError : public std::runtime_error {
 public:
  FormulaError(std::string message, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Grammar:
//   formula := ident "~" term ("+" term)*
//   term    := ident
//            | "s(" ident ["," "k=" int] ")"
//            | "te(" ident ("," ident)* ["," "d=c(" int ("," int)* ")"]
//                                       ["," "k=c(" int ("," int)* ")"] ")"
// Whitespace is insignificant.  Omitted k defaults to 10 per 1-D group and
// 5 per axis for 2-D groups; omitted d defaults to all ones.
ModelSpec parse_formula(std::string_view text);

// Canonical rendering; parse_formula(format_spec(s)) reproduces s for any
// valid spec (family/offset travel outside the formula and keep their
// defaults on re-parse).
std::string format_spec(const ModelSpec& spec);

}  // namespace countgam
