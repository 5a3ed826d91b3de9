#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "blanket/common.hpp"

namespace blanket {

// Runtime value of a random variable.
class Value {
 public:
  enum class Kind { Real, Boolean, Index };

  Value() : kind_(Kind::Real), real_(0.0) {}

  static Value real(double x) {
    Value v;
    v.kind_ = Kind::Real;
    v.real_ = x;
    return v;
  }
  static Value boolean(bool b) {
    Value v;
    v.kind_ = Kind::Boolean;
    v.index_ = b ? 1 : 0;
    return v;
  }
  static Value index(std::int64_t i) {
    Value v;
    v.kind_ = Kind::Index;
    v.index_ = i;
    return v;
  }

  Kind kind() const { return kind_; }
  bool is_real() const { return kind_ == Kind::Real; }
  bool is_boolean() const { return kind_ == Kind::Boolean; }
  bool is_index() const { return kind_ == Kind::Index; }

  double as_real() const {
    if (kind_ != Kind::Real) throw type_error("value is not real");
    return real_;
  }
  bool as_boolean() const {
    if (kind_ != Kind::Boolean) throw type_error("value is not boolean");
    return index_ != 0;
  }
  std::int64_t as_index() const {
    if (kind_ != Kind::Index) throw type_error("value is not an index");
    return index_;
  }

  // Discrete values as a 0-based category index; used by featurization.
  std::int64_t category() const {
    if (kind_ == Kind::Real) throw type_error("real value has no category");
    return index_;
  }

  // Numeric view used by chain recording and CSV output.
  double as_double() const { return kind_ == Kind::Real ? real_ : static_cast<double>(index_); }

  bool finite() const { return kind_ != Kind::Real || std::isfinite(real_); }

  bool operator==(const Value& o) const {
    if (kind_ != o.kind_) return false;
    return kind_ == Kind::Real ? real_ == o.real_ : index_ == o.index_;
  }
  bool operator!=(const Value& o) const { return !(*this == o); }

  std::string str() const {
    switch (kind_) {
      case Kind::Real: return std::to_string(real_);
      case Kind::Boolean: return index_ ? "true" : "false";
      default: return std::to_string(index_);
    }
  }

 private:
  Kind kind_;
  double real_ = 0.0;
  std::int64_t index_ = 0;
};

}  // namespace blanket
