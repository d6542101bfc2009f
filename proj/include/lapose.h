/*
 * lapose C API: latent-action pretraining for camera pose estimation on
 * synthetic driving video.
 *
 * All functions return a lapose_status; LAPOSE_OK is 0. On failure,
 * lapose_last_error() holds a thread-local message describing the most recent
 * failing call. Handles returned by _open functions must be released with the
 * matching _close function.
 *
 * Conventions: quaternions are (w, x, y, z) on the w >= 0 hemisphere; relative
 * pose rows are [tx ty tz qw qx qy qz]; angles are radians unless a name says
 * degrees; images are 8-bit RGB, row-major, top-left origin.
 */
#ifndef LAPOSE_H
#define LAPOSE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lapose_status {
    LAPOSE_OK = 0,
    LAPOSE_INVALID_ARGUMENT = 1,
    LAPOSE_RUNTIME_ERROR = 2,
    LAPOSE_IO_ERROR = 3,
    /* Degenerate input handled by contract: skipped pair / filtered clip. */
    LAPOSE_DEGENERATE = 4
} lapose_status;

const char* lapose_version(void);
const char* lapose_last_error(void);

/* ---- geometry ----------------------------------------------------------- */

/* Normalizes q in place onto the canonical hemisphere. */
lapose_status lapose_quat_canonicalize(double q_wxyz[4]);

lapose_status lapose_quat_geodesic_deg(const double q1_wxyz[4], const double q2_wxyz[4],
                                       double* out_deg);

/* LAPOSE_DEGENERATE when either norm is at or below 1e-3. */
lapose_status lapose_translation_angle_deg(const double t1[3], const double t2[3],
                                           double* out_deg);

/* Mean L2 norm of n translation rows [tx ty tz]. */
lapose_status lapose_metric_scale(const double* translations, size_t n, double* out_scale);

/* Rigid least-squares alignment of p onto q (n >= 3 rows of xyz).
 * LAPOSE_DEGENERATE on a rank-deficient point set. */
lapose_status lapose_umeyama_se3(const double* p_xyz, const double* q_xyz, size_t n,
                                 double out_q_wxyz[4], double out_t[3]);

/* ---- metrics ------------------------------------------------------------ */

/* Pairwise AUC@5 between two relative-pose sequences of n_steps rows.
 * LAPOSE_DEGENERATE when every pair is degenerate. */
lapose_status lapose_auc5(const double* pred_steps, const double* gt_steps, size_t n_steps,
                          double* out_auc, size_t* out_skipped_pairs);

/* Scale-normalized aligned RMSE between two position sequences (n rows xyz,
 * gt in meters). LAPOSE_DEGENERATE flags a near-stationary ground truth
 * (mean step < 0.1 m, clip filtered). */
lapose_status lapose_ate_s(const double* pred_xyz, const double* gt_xyz, size_t n,
                           double* out_rmse);

/* Metric ATE: pred_steps are normalized relative poses, scale multiplies the
 * translations, gt is the metric trajectory (n_steps+1 rows of xyz). */
lapose_status lapose_ate_m(const double* pred_steps, size_t n_steps, double scale,
                           const double* gt_xyz, double* out_rmse);

/* ---- dataset generation -------------------------------------------------- */

typedef struct lapose_generate_options {
    const char* out_dir;
    const char* split;       /* "train", "eval", or "probe" */
    uint32_t n_clips;
    uint64_t seed;
    double reverse_rate;     /* probability of a reverse-motion clip */
    const char* kinds_csv;   /* optional: "straight,left-turn,..."; NULL = default mix */
    int jobs;
} lapose_generate_options;

lapose_status lapose_generate_dataset(const lapose_generate_options* opts);

/* ---- training ------------------------------------------------------------ */

/* config_text is flat "key = value" lines; pass NULL for stage defaults. */
lapose_status lapose_pretrain(const char* config_text, const char* data_dir,
                              const char* out_dir);

/* pretrained_ckpt NULL runs the random-init frozen-backbone baseline. */
lapose_status lapose_posttrain(const char* config_text, const char* data_dir,
                               const char* out_dir, const char* pretrained_ckpt);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct lapose_eval_options {
    const char* ckpt_path;
    const char* data_dir;
    const char* split;         /* NULL = "eval" */
    const char* report_dir;    /* receives report.json + report.csv */
    const char* fps_sweep_csv; /* e.g. "4,2,1.3,1"; NULL = none */
    int buckets;               /* nonzero: curvature/accel bucket tables */
    const char* plot_dir;      /* NULL = no plots */
    int jobs;
} lapose_eval_options;

lapose_status lapose_evaluate(const lapose_eval_options* opts, double* out_mean_auc5);

/* Linear probe from frozen latents to motion labels; trains on `train`,
 * scores on `eval`. Scatter plot written when plot_dir is non-NULL. */
lapose_status lapose_probe(const char* ckpt_path, const char* data_dir, const char* plot_dir,
                           int jobs, double* out_accuracy);

/* ---- model handle --------------------------------------------------------- */

typedef struct lapose_model lapose_model; /* opaque */

lapose_status lapose_model_open(const char* ckpt_path, lapose_model** out_model);
void lapose_model_close(lapose_model* model);

lapose_status lapose_model_frame_size(const lapose_model* model, uint32_t* out_width,
                                      uint32_t* out_height, uint32_t* out_frames);

/* Feed-forward prediction over a clip of `frames` RGB images at `fps`.
 * out_steps: (frames-1) rows of [tx ty tz qw qx qy qz fov_rad] (normalized
 * translation); out_scale: predicted metric scale in meters. */
lapose_status lapose_model_predict(const lapose_model* model, const uint8_t* rgb,
                                   uint32_t frames, uint32_t width, uint32_t height, double fps,
                                   double* out_steps, double* out_scale);

#ifdef __cplusplus
}
#endif

#endif /* LAPOSE_H */
