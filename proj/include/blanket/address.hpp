#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "blanket/common.hpp"

namespace blanket {

namespace detail {

// Process-wide family-name interner. Addresses hold a pointer into this
// table, so copies are cheap and equality is a pointer compare. Insertion
// is mutex-guarded; interned strings are never removed, so reads through
// an Address are safe without locking.
class FamilyTable {
 public:
  static FamilyTable& instance() {
    static FamilyTable t;
    return t;
  }

  const std::string* intern(const std::string& name) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = names_.insert(name).first;
    return &*it;
  }

 private:
  std::mutex mu_;
  std::set<std::string> names_;
};

}  // namespace detail

// Identity of a random variable: a family name plus integer indices.
// Ordering is lexicographic on the family name, then on the indices, so
// every iteration over addresses in the engine is deterministic.
class Address {
 public:
  Address() : family_(detail::FamilyTable::instance().intern("")) {}

  explicit Address(const std::string& family, std::vector<int> args = {})
      : family_(detail::FamilyTable::instance().intern(family)), args_(std::move(args)) {}

  Address(const std::string& family, int arg) : Address(family, std::vector<int>{arg}) {}
  Address(const std::string& family, int a0, int a1) : Address(family, std::vector<int>{a0, a1}) {}

  const std::string& family() const { return *family_; }
  const std::vector<int>& args() const { return args_; }

  bool operator==(const Address& o) const { return family_ == o.family_ && args_ == o.args_; }
  bool operator!=(const Address& o) const { return !(*this == o); }

  bool operator<(const Address& o) const {
    if (family_ != o.family_) {
      int c = family_->compare(*o.family_);
      if (c != 0) return c < 0;
    }
    return args_ < o.args_;
  }
  bool operator>(const Address& o) const { return o < *this; }
  bool operator<=(const Address& o) const { return !(o < *this); }
  bool operator>=(const Address& o) const { return !(*this < o); }

  // Stable across processes (hashes the name, not the pointer).
  std::uint64_t stable_hash() const {
    std::uint64_t h = fnv1a(*family_);
    for (int a : args_) h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(a)));
    return h;
  }

  std::string str() const {
    if (args_.empty()) return *family_;
    std::string s = *family_ + "(";
    for (std::size_t i = 0; i < args_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(args_[i]);
    }
    s += ")";
    return s;
  }

 private:
  const std::string* family_;
  std::vector<int> args_;
};

}  // namespace blanket
