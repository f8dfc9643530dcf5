#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace graphkernel {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::string at_pair(std::size_t i, std::size_t j) {
  return " at (" + std::to_string(i) + ", " + std::to_string(j) + ")";
}
}  // namespace detail

class AsymmetricAdjacency : public Error {
 public:
  AsymmetricAdjacency(std::size_t i, std::size_t j)
      : Error("adjacency not symmetric" + detail::at_pair(i, j)), i(i), j(j) {}
  std::size_t i, j;
};

class NegativeWeight : public Error {
 public:
  NegativeWeight(std::size_t i, std::size_t j)
      : Error("negative edge weight" + detail::at_pair(i, j)), i(i), j(j) {}
  std::size_t i, j;
};

class SelfLoop : public Error {
 public:
  explicit SelfLoop(std::size_t i)
      : Error("self-loop at vertex " + std::to_string(i)), i(i) {}
  std::size_t i;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what)
      : Error("dimension mismatch: " + what) {}
};

class NotSymmetric : public Error {
 public:
  explicit NotSymmetric(const std::string& what)
      : Error("matrix not symmetric: " + what) {}
};

class NegativeCoupling : public Error {
 public:
  explicit NegativeCoupling(double alpha)
      : Error("coupling weight must be non-negative, got " + std::to_string(alpha)) {}
};

class PoleAtEigenvalue : public Error {
 public:
  explicit PoleAtEigenvalue(double lambda)
      : Error("spectral map undefined at eigenvalue " + std::to_string(lambda)) {}
};

class EmptyHistory : public Error {
 public:
  EmptyHistory() : Error("history must contain at least one row") {}
};

class NegativeCoefficient : public Error {
 public:
  explicit NegativeCoefficient(std::size_t m)
      : Error("combination coefficient " + std::to_string(m) + " is negative"), m(m) {}
  std::size_t m;
};

class OutOfRange : public Error {
 public:
  explicit OutOfRange(const std::string& what)
      : Error("vector outside kernel range: " + what) {}
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what)
      : Error("matrix not positive definite: " + what) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(const std::string& what)
      : Error("rank deficient: " + what) {}
};

class RankDeficientBasis : public Error {
 public:
  explicit RankDeficientBasis(const std::string& what)
      : Error("sampled basis rank deficient: " + what) {}
};

class SingularSystem : public Error {
 public:
  explicit SingularSystem(const std::string& what)
      : Error("singular linear system: " + what) {}
};

class SolverDidNotConverge : public Error {
 public:
  SolverDidNotConverge(const std::string& what, std::size_t iterations)
      : Error("solver did not converge after " + std::to_string(iterations) +
              " iterations: " + what),
        iterations(iterations) {}
  std::size_t iterations;
};

class EmptySlot : public Error {
 public:
  explicit EmptySlot(std::size_t t)
      : Error("slot " + std::to_string(t) + " has no samples"), t(t) {}
  std::size_t t;
};

class SingularInnovation : public Error {
 public:
  explicit SingularInnovation(std::size_t t)
      : Error("innovation matrix singular at slot " + std::to_string(t)), t(t) {}
  std::size_t t;
};

class SingularInstantaneous : public Error {
 public:
  SingularInstantaneous() : Error("I - A(t,t) is singular") {}
};

class SingularCombination : public Error {
 public:
  explicit SingularCombination(const std::string& what)
      : Error("combined kernel singular: " + what) {}
};

class DisconnectedDegenerate : public Error {
 public:
  explicit DisconnectedDegenerate(const std::string& what)
      : Error("clustering degenerate: " + what) {}
};

class UndefinedSnr : public Error {
 public:
  UndefinedSnr() : Error("SNR undefined for a zero signal") {}
};

class ZeroReference : public Error {
 public:
  ZeroReference() : Error("reference signal has zero norm") {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io: " + what) {}
};

}  // namespace graphkernel
