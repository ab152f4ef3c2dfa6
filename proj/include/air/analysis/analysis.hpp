#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/recurrence/recurrence.hpp"
#include "air/tasks/geometry.hpp"
#include "air/tasks/puzzle.hpp"

namespace air::analysis {

using model::Level;
using model::Model;
using recurrence::RecurrenceConfig;
using recurrence::RolloutTrace;
using tasks::PuzzleInstance;

// ---- content changes -------------------------------------------------------

struct ContentChangeSeries {
    Level state = Level::H;
    std::vector<std::size_t> per_step;  // C(t) for t = 1..T
    std::size_t total = 0;
    std::size_t rewrites = 0;       // token -> different token
    std::size_t commitments = 0;    // undecided -> token
    std::size_t uncommitments = 0;  // token -> undecided

    nlohmann::json to_json() const;
};

/// Token differences between consecutive grids of one state. `undecided`
/// is BLANK for sudoku and PAD for mazes; every transition counts.
ContentChangeSeries content_change_series(const std::vector<std::vector<int>>& grids, Level state, int undecided);

/// Element-wise sum of `b` into `a` (series of equal length).
void accumulate(ContentChangeSeries& a, const ContentChangeSeries& b);

// ---- freeze experiment -----------------------------------------------------

struct FreezeCondition {
    double exact_match = 0.0;
    ContentChangeSeries H;
    ContentChangeSeries L;
};

struct FreezeReport {
    recurrence::FreezePolicy which = recurrence::FreezePolicy::freeze_H;
    std::size_t puzzles = 0;
    FreezeCondition normal;
    FreezeCondition frozen;

    /// The state that keeps updating under `which`.
    Level active() const noexcept;
    nlohmann::json to_json() const;
};

/// Matched normal and frozen rollouts on the same puzzles. Series are
/// summed over puzzles. Throws std::invalid_argument for single-state
/// configs or `which == none`.
FreezeReport freeze_experiment(const Model& m, const std::vector<PuzzleInstance>& data,
                               recurrence::FreezePolicy which, const RecurrenceConfig& cfg,
                               std::size_t batch_size = 64);

// ---- attention statistics --------------------------------------------------

enum class QueryClass { adjacent, control };
std::string_view to_string(QueryClass c, tasks::TaskKind kind);

/// One query at one layer and cycle, head-averaged. Fields that do not
/// apply to the task are NaN.
struct AttentionStatRow {
    std::size_t puzzle = 0;
    QueryClass cls = QueryClass::control;
    std::size_t layer = 0;
    std::size_t cycle = 0;
    int query = 0;
    double d_nbr;
    double d_ent;
    double d_viol;
    double d_rho4;
    double d_rho8;
    double d_rho5x5;
    double d_rho_viol;  // NaN unless the neighborhood holds both bins
};

/// Entropy of the normalised distribution divided by log(n), n = raw.size().
double normalized_entropy(std::span<const double> raw);

/// One layer's L and H captures for batch row `b`. Tensors are
/// [B, heads, S', S'] with `prefix_*` leading level-token slots.
struct LayerPair {
    const Tensor& L;
    std::size_t prefix_L;
    const Tensor& H;
    std::size_t prefix_H;
    std::size_t b;
    std::size_t cells;
};

/// Raw weights of query `q` to the puzzle-cell keys for one head.
std::vector<double> query_weights(const Tensor& layer, std::size_t b, std::size_t head, std::size_t prefix,
                                  std::size_t cells, int q);

/// Head-averaged per-query statistics. `violated` has one flag per cell;
/// `nbr` is the neighborhood used for the mass, violation and control terms.
struct QueryStats {
    double d_mass = 0.0;  // mass_L(nbr) - mass_H(nbr)
    double d_ent = 0.0;   // entropy_H - entropy_L
    double d_viol = 0.0;
    double d_rho_viol = 0.0;
    bool control_eligible = false;
};
QueryStats query_stats(const LayerPair& p, int q, const std::vector<int>& nbr, const std::vector<char>& violated);

/// Head-averaged (mass_L(N) - mass_H(N)) / |N|.
double density_contrast(const LayerPair& p, int q, const std::vector<int>& nbr);

/// Decoded z_H of batch row `b` entering `cycle` (the initial grid for cycle 0).
std::vector<int> grid_at_cycle_entry(const RolloutTrace& trace, std::size_t b, std::size_t cycle);

/// Cycles with attention captures, ascending. Throws std::runtime_error
/// naming the cycle when only one of its L/H captures is present.
std::vector<std::size_t> captured_cycles(const RolloutTrace& trace);

/// Queries: blank input cells. V: cells clashing under decoded z_H at cycle
/// entry. Rows for every captured cycle, layer and query.
std::vector<AttentionStatRow> sudoku_attention_contrasts(const RolloutTrace& trace, std::size_t b,
                                                         const PuzzleInstance& puzzle, std::size_t puzzle_id);

/// Queries: SOLUTION cells of the target. V: cells where decoded z_H at
/// cycle entry differs from the target.
std::vector<AttentionStatRow> maze_attention_contrasts(const RolloutTrace& trace, std::size_t b,
                                                       const PuzzleInstance& puzzle, std::size_t puzzle_id);

struct ControlValue {
    std::size_t layer;
    std::size_t cycle;
    int query;
    double value;
};

/// Within-neighborhood violation control for eligible queries (both bins
/// non-empty). `kind` is sudoku for sudoku boards and n4 for mazes.
std::vector<ControlValue> within_neighborhood_control(const RolloutTrace& trace, std::size_t b,
                                                      const PuzzleInstance& puzzle, tasks::NeighborhoodKind kind);

// ---- committedness ---------------------------------------------------------

struct CommittednessProfile {
    std::vector<std::size_t> undecided_H;  // initial grid, then one per sub-step
    std::vector<std::size_t> undecided_L;  // empty for single-state traces
    std::vector<std::size_t> shift_L;      // |U(t) xor U(t-1)| over consecutive L-updates

    nlohmann::json to_json() const;
};

std::size_t count_undecided(std::span<const int> grid, int undecided);
CommittednessProfile committedness_profile(const RolloutTrace& trace, std::size_t b, int undecided);

// ---- aggregation -----------------------------------------------------------

struct SummaryRow {
    std::string cls;
    std::size_t layer = 0;
    std::string metric;
    double mean = 0.0;
    double ci95 = 0.0;
    std::size_t n = 0;
    std::string note;  // "n=1" or a warning for an empty group
};

/// Metric names carried by AttentionStatRow.
const std::vector<std::string>& metric_names(tasks::TaskKind kind);
double metric_value(const AttentionStatRow& r, const std::string& metric);

/// Per (class, layer, metric): each puzzle's queries (over all cycles) are
/// averaged first; the summary is the mean over puzzles with
/// 1.96 sd / sqrt(n) (sample sd). A puzzle contributes to every class in
/// which it has a query. Empty groups yield a warning row with n = 0.
std::vector<SummaryRow> aggregate_report(const std::vector<AttentionStatRow>& rows, tasks::TaskKind kind);

/// Mean and 1.96 sd / sqrt(n) of `values`; half-width 0 when n == 1.
std::pair<double, double> mean_ci95(std::span<const double> values);

/// 6 significant digits; empty for NaN.
std::string fmt6(double v);
std::string rows_csv(const std::vector<AttentionStatRow>& rows, tasks::TaskKind kind);
std::string summary_csv(const std::vector<SummaryRow>& rows);

// ---- charts ----------------------------------------------------------------

struct Series {
    std::string label;
    std::vector<double> values;
};

/// Static SVG line chart (x = index).
std::string svg_line_chart(const std::string& title, const std::vector<Series>& series);
/// Static SVG grouped bar chart with optional symmetric error bars.
struct Bar {
    std::string group;
    std::string label;
    double value;
    double err;
};
std::string svg_bar_chart(const std::string& title, const std::vector<Bar>& bars);

}  // namespace air::analysis
