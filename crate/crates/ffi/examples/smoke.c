/* Minimal C client: parse a manifest, run it, print the verdicts. */
#include <stdio.h>

#include "extnls.h"

static const char *MANIFEST =
    "scenario = \"radial_global\"\n"
    "dt = 0.01\n"
    "t_final = 0.5\n"
    "sample_stride = 10\n"
    "[params]\nn = 3\np = 10.0\nr_max = 21.0\n"
    "[domain]\nnum_radial = 799\n"
    "[initial_data]\nprofile = \"gaussian_ring\"\namplitude = 0.5\npower = 3\nwidth = 1.0\n";

int main(void) {
    ExtnlsManifest *m = NULL;
    ExtnlsRun *run = NULL;
    if (extnls_manifest_from_toml(MANIFEST, &m) != EXTNLS_STATUS_OK) {
        fprintf(stderr, "manifest: %s\n", extnls_last_error());
        return 1;
    }
    if (extnls_run(m, &run) != EXTNLS_STATUS_OK) {
        fprintf(stderr, "run: %s\n", extnls_last_error());
        extnls_manifest_free(m);
        return 1;
    }
    size_t count = 0;
    extnls_run_verdict_count(run, &count);
    for (size_t i = 0; i < count; i++) {
        bool pass = false;
        char *name = NULL;
        extnls_run_verdict(run, i, &pass, &name, NULL);
        printf("%s %s\n", pass ? "PASS" : "FAIL", name);
        extnls_string_free(name);
    }
    size_t rows = 0;
    ExtnlsRecord last;
    extnls_run_record_count(run, &rows);
    extnls_run_record(run, rows - 1, &last);
    printf("rows %zu t_end %.3f\n", rows, last.time);

    ExtnlsManifest *bad = NULL;
    ExtnlsStatus s = extnls_manifest_from_toml("scenario = 1", &bad);
    printf("bad manifest status %d\n", (int)s);

    int32_t code = -1;
    extnls_run_exit_code(run, &code);
    extnls_run_free(run);
    extnls_manifest_free(m);
    return code;
}
