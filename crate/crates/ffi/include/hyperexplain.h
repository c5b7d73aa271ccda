#ifndef HYPEREXPLAIN_H
#define HYPEREXPLAIN_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

#define HX_OK 0

#define HX_ERR_NULL 1

#define HX_ERR_ARGUMENT 2

#define HX_ERR_DATA 3

#define HX_ERR_NUMERIC 4

#define HX_ERR_NOTHING_TUNABLE 5

#define HX_ERR_INTERNAL 6

#define HX_ERR_PANIC 7

#define HX_VARIANT_NHP 0

#define HX_VARIANT_HP 1

/*
 Marks the node slot of a hyperedge removal.
 */
#define HX_NO_NODE ~0

/*
 A dataset together with its hypergraph and dense features.
 */
typedef struct HxDataset HxDataset;

typedef struct HxExplanation HxExplanation;

typedef struct HxModel HxModel;

typedef struct HxExplainOptions {
  size_t iterations;
  double learning_rate;
  double momentum;
  double beta;
  double threshold;
  /*
   0 means the model's convolution count.
   */
  size_t hops;
  /*
   Optimise over the whole hypergraph instead of the n-hop view.
   */
  bool full_scope;
} HxExplainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *hx_last_error(void);

struct HxExplainOptions hx_explain_options_default(void);

/*
 Loads a dataset file (format v1).
 */
int32_t hx_dataset_load(const char *path, struct HxDataset **out);

void hx_dataset_free(struct HxDataset *d);

/*
 Node count, or 0 for a null handle.
 */
size_t hx_dataset_num_nodes(const struct HxDataset *d);

/*
 Trains with default settings apart from `epochs` and `seed`.
 */
int32_t hx_train(const struct HxDataset *d, size_t epochs, uint64_t seed, struct HxModel **out);

/*
 Loads a checkpoint (format v1).
 */
int32_t hx_model_load(const char *path, struct HxModel **out);

int32_t hx_model_save(const struct HxModel *m, const char *path);

void hx_model_free(struct HxModel *m);

/*
 Predicted class of `node` on the unedited hypergraph.
 */
int32_t hx_predict(const struct HxDataset *d,
                   const struct HxModel *m,
                   size_t node,
                   size_t *out_class);

/*
 Runs the explainer for one node. `options` may be null for defaults.
 A search that finds nothing still succeeds; query it with
 `hx_explanation_found`.
 */
int32_t hx_explain(const struct HxDataset *d,
                   const struct HxModel *m,
                   size_t node,
                   int32_t variant,
                   const struct HxExplainOptions *options,
                   struct HxExplanation **out);

void hx_explanation_free(struct HxExplanation *e);

/*
 1 if a counterfactual was found, 0 if not or for a null handle.
 */
int32_t hx_explanation_found(const struct HxExplanation *e);

/*
 Prediction on the unedited hypergraph.
 */
size_t hx_explanation_original_class(const struct HxExplanation *e);

/*
 Prediction after the removal, or `HX_NO_NODE` when nothing was found.
 */
size_t hx_explanation_new_class(const struct HxExplanation *e);

/*
 Number of removed incidences (NHP) or hyperedges (HP); 0 if none found.
 */
size_t hx_explanation_size(const struct HxExplanation *e);

size_t hx_explanation_found_at_iteration(const struct HxExplanation *e);

double hx_explanation_wall_time(const struct HxExplanation *e);

/*
 The `index`-th removal. Incidence removals fill both slots; hyperedge
 removals set `*out_node` to `HX_NO_NODE`.
 */
int32_t hx_explanation_removal_at(const struct HxExplanation *e,
                                  size_t index,
                                  size_t *out_node,
                                  size_t *out_edge);

/*
 JSON rendering of the explanation; release with `hx_string_free`.
 Returns null on failure.
 */
char *hx_explanation_to_json(const struct HxExplanation *e);

void hx_string_free(char *s);

/*
 Probability that `attempts` random removals hit one particular subset
 of `degree` entries.
 */
double hx_bernoulli_lower_bound(uint32_t degree, uint64_t attempts);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPEREXPLAIN_H */
