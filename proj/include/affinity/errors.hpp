#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace affinity {

// Base of every error raised by the library. Callers that only need a message
// can catch this; the subclasses carry structured context.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ZeroVarianceColumn : public Error {
public:
    explicit ZeroVarianceColumn(std::string column)
        : Error("zero-variance column: " + column), column_(std::move(column)) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class NotConverged : public Error {
    static std::string format_error(double e) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", e);
        return buf;
    }

public:
    NotConverged(const std::string& what, double final_error, int iterations)
        : Error(what + " did not converge after " + std::to_string(iterations) +
                " iterations (final error " + format_error(final_error) + ")"),
          final_error_(final_error), iterations_(iterations) {}
    double final_error() const noexcept { return final_error_; }
    int iterations() const noexcept { return iterations_; }

private:
    double final_error_;
    int iterations_;
};

class CenteringNotConverged : public NotConverged {
public:
    CenteringNotConverged(double final_error, int iterations)
        : NotConverged("score centering", final_error, iterations) {}
};

class NumericalOverflow : public Error {
public:
    using Error::Error;
};

class NonPositiveVariance : public Error {
public:
    using Error::Error;
};

class SupportPointNotFound : public Error {
public:
    using Error::Error;
};

class SingularFisher : public Error {
public:
    explicit SingularFisher(double min_eigenvalue)
        : Error("Fisher information is singular (smallest eigenvalue " +
                std::to_string(min_eigenvalue) + "); attributes may be collinear"),
          min_eigenvalue_(min_eigenvalue) {}
    double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

class SingularCornerBlock : public Error {
public:
    SingularCornerBlock(int rank, double smallest_singular_value)
        : Error("corner block of the singular vectors is singular at rank " +
                std::to_string(rank)),
          rank_(rank), smallest_(smallest_singular_value) {}
    int rank() const noexcept { return rank_; }
    double smallest_singular_value() const noexcept { return smallest_; }

private:
    int rank_;
    double smallest_;
};

// Density-ratio errors for the singles module. `bin` is the cell index.
class BinError : public Error {
public:
    BinError(const std::string& what, std::size_t bin)
        : Error(what + " (bin " + std::to_string(bin) + ")"), bin_(bin) {}
    std::size_t bin() const noexcept { return bin_; }

private:
    std::size_t bin_;
};

class EmptyBin : public BinError {
public:
    explicit EmptyBin(std::size_t bin) : BinError("empty bin", bin) {}
};

class AllSingleBin : public BinError {
public:
    explicit AllSingleBin(std::size_t bin) : BinError("bin has no matched mass", bin) {}
};

class ZeroSinglesBin : public BinError {
public:
    explicit ZeroSinglesBin(std::size_t bin) : BinError("bin has no single mass", bin) {}
};

class NoAcquaintance : public Error {
public:
    using Error::Error;
};

class MissingColumn : public Error {
public:
    explicit MissingColumn(const std::string& column)
        : Error("missing column: " + column) {}
};

class NonNumericCell : public Error {
public:
    NonNumericCell(std::size_t row, const std::string& column, const std::string& cell)
        : Error("non-numeric cell at row " + std::to_string(row) + ", column " + column +
                ": '" + cell + "'"),
          row_(row), column_(column) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class EmptyAfterFiltering : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace affinity
