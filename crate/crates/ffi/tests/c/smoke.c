#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "phasehyst.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__,     \
                    __LINE__, #cond);                                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

static const char *CONFIG =
    "{\"model\": {\"kappa\": 1.0, \"lambda\": 0.05, \"period\": 1.0, \"dt\": 0.01,"
    " \"grid\": {\"length\": 1.0, \"n_interior\": 16},"
    " \"h\": \"sin(2*pi*t)\", \"g\": \"4*cos(2*pi*t) - 0.5*v\","
    " \"lipschitz_g_u\": 0.0, \"lipschitz_g_v\": 0.5},"
    " \"solver\": {\"tol\": 1e-10}}";

int main(void) {
    PhConfig *cfg = NULL;
    char msg[256];
    size_t needed = 0;

    CHECK(strlen(ph_version()) > 0);

    CHECK(ph_config_from_json("{\"model\": 3}", &cfg) == PH_STATUS_CONFIG);
    CHECK(cfg == NULL);
    CHECK(ph_last_error_message(msg, sizeof msg, &needed) == PH_STATUS_OK);
    CHECK(strstr(msg, "model") != NULL);

    CHECK(ph_config_from_json(CONFIG, &cfg) == PH_STATUS_OK);
    size_t n = ph_config_n_interior(cfg);
    CHECK(n == 16);
    CHECK(ph_config_steps(cfg) == 100);

    char digest[17];
    CHECK(ph_config_digest(cfg, digest, 4, &needed) == PH_STATUS_BUFFER_TOO_SMALL);
    CHECK(needed == 17);
    CHECK(ph_config_digest(cfg, digest, sizeof digest, NULL) == PH_STATUS_OK);
    CHECK(strlen(digest) == 16);

    PhPeriodic *p = NULL;
    CHECK(ph_find_periodic(cfg, NULL, NULL, 0.0, 0, -1, &p) == PH_STATUS_OK);
    CHECK(ph_periodic_converged(p) == 1);
    CHECK(ph_periodic_residual(p) <= 1e-10);

    double *u = calloc(n, sizeof *u);
    double *v = calloc(n, sizeof *v);
    CHECK(ph_periodic_final_state(p, u, v) == PH_STATUS_OK);

    PhTrajectory *tr = NULL;
    CHECK(ph_integrate(cfg, u, v, &tr) == PH_STATUS_OK);
    size_t len = ph_trajectory_len(tr);
    CHECK(len == 101);
    double *u1 = calloc(n, sizeof *u1);
    double *v1 = calloc(n, sizeof *v1);
    double t = 0.0;
    CHECK(ph_trajectory_state(tr, len - 1, &t, u1, v1) == PH_STATUS_OK);
    CHECK(fabs(t - 1.0) < 1e-12);
    double d = 0.0;
    for (size_t i = 0; i < n; i++) {
        d = fmax(d, fmax(fabs(u1[i] - u[i]), fabs(v1[i] - v[i])));
    }
    CHECK(d < 1e-8);
    CHECK(ph_trajectory_state(tr, len, &t, NULL, NULL) == PH_STATUS_INVALID_ARGUMENT);

    CHECK(ph_periodic_report_json(p, NULL, 0, &needed) == PH_STATUS_BUFFER_TOO_SMALL);
    char *json = malloc(needed);
    CHECK(ph_periodic_report_json(p, json, needed, NULL) == PH_STATUS_OK);
    CHECK(strstr(json, "\"converged\":true") != NULL);

    free(json);
    free(u);
    free(v);
    free(u1);
    free(v1);
    ph_trajectory_free(tr);
    ph_periodic_free(p);
    ph_config_free(cfg);
    ph_config_free(NULL);
    puts("c smoke ok");
    return 0;
}
