#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dosedr {

//! Observational data: covariates V (n x p), surrogates S (n x q),
//! continuous treatment A, primary outcome Y (NaN where missing) and the
//! label indicator R with R_i = 1 iff Y_i is present. X = (V, S).
//! Immutable after construction; safe to share across threads.
class Dataset {
public:
    //! Validates and takes ownership; Y entries must be NaN exactly where
    //! labels[i] == 0, and every present value must be finite.
    Dataset(Eigen::MatrixXd covariates, Eigen::MatrixXd surrogates,
            Eigen::VectorXd treatment, Eigen::VectorXd outcome,
            std::vector<std::uint8_t> labels);

    Eigen::Index n() const { return treatment_.size(); }
    Eigen::Index n_labeled() const { return n_labeled_; }
    Eigen::Index n_unlabeled() const { return n() - n_labeled_; }
    Eigen::Index p() const { return covariates_.cols(); }
    Eigen::Index q() const { return surrogates_.cols(); }

    const Eigen::MatrixXd& covariates() const { return covariates_; }
    const Eigen::MatrixXd& surrogates() const { return surrogates_; }
    const Eigen::VectorXd& treatment() const { return treatment_; }
    const Eigen::VectorXd& outcome() const { return outcome_; }
    const std::vector<std::uint8_t>& labels() const { return labels_; }

    double a(Eigen::Index i) const { return treatment_[i]; }
    double y(Eigen::Index i) const { return outcome_[i]; }
    bool labeled(Eigen::Index i) const { return labels_[i] != 0; }

    Eigen::RowVectorXd v_row(Eigen::Index i) const { return covariates_.row(i); }
    //! Row of X = (V, S), the covariate/surrogate concatenation.
    Eigen::RowVectorXd x_row(Eigen::Index i) const;

    //! New dataset restricted to the given row indices (order preserved).
    Dataset subset(const std::vector<Eigen::Index>& rows) const;
    //! Labeled rows only.
    Dataset labeled_subset() const;

    //! Rows skipped at load time because a required cell was missing.
    Eigen::Index dropped_rows() const { return dropped_rows_; }
    void set_dropped_rows(Eigen::Index k) { dropped_rows_ = k; }

    std::vector<std::string> covariate_names;
    std::vector<std::string> surrogate_names;
    std::string treatment_name = "a";
    std::string outcome_name = "y";
    std::string label_name = "r";

private:
    Eigen::MatrixXd covariates_;
    Eigen::MatrixXd surrogates_;
    Eigen::VectorXd treatment_;
    Eigen::VectorXd outcome_;
    std::vector<std::uint8_t> labels_;
    Eigen::Index n_labeled_ = 0;
    Eigen::Index dropped_rows_ = 0;
};

//! Column roles for CSV ingestion.
struct CsvSchema {
    std::string treatment;
    std::string outcome;
    std::vector<std::string> covariates;
    std::vector<std::string> surrogates;
    std::string label;  // optional; empty = infer R from outcome missingness
};

//! Loads a dataset, treating an empty outcome cell or the literal "NA" as
//! missing. Rows missing a covariate/surrogate/treatment cell are dropped
//! (counted in Dataset::dropped_rows); any other malformed cell is a
//! ParseError naming the row and column.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

//! Writes the dataset with its column names; load_csv(save_csv(d)) is the
//! identity (values round-trip exactly).
void save_csv(const std::string& path, const Dataset& data);

//! Three-way (or two-way) fold split, Algorithm-1 style.
struct FoldAssignment {
    std::vector<int> fold_of_row;  // values in [0, k)
    int k = 0;
    std::uint64_t seed = 0;

    std::vector<Eigen::Index> rows_in_fold(int fold) const;
};

//! Seeded Fisher-Yates shuffle, then contiguous blocks; fold sizes differ
//! by at most one. k must be 2 or 3 and n >= k.
FoldAssignment split_folds(const Dataset& data, std::uint64_t seed, int k = 3);

struct ValidationReport {
    Eigen::Index n = 0, n_labeled = 0, n_unlabeled = 0;
    Eigen::Index p = 0, q = 0;
    double treatment_min = 0.0, treatment_max = 0.0;
    double label_rate = 0.0;
    Eigen::Index dropped_rows = 0;
    std::vector<std::string> flags;
    bool fatal = false;

    std::string to_string() const;
};

//! Summary + sanity flags; never throws (fatal problems are flagged).
ValidationReport validate(const Dataset& data);

} // namespace dosedr
