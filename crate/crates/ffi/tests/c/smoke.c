#include <stdio.h>
#include "lts_ffi.h"

int main(void) {
    LtsPath *b = NULL, *l = NULL;
    if (lts_brownian_path(10, 1, 0, &b) != LTS_STATUS_OK) return 1;
    if (lts_path_len(b) != 1025) return 2;
    if (lts_local_time(b, 0.0, LTS_SIDE_RIGHT, &l) != LTS_STATUS_OK) return 3;
    double t = -1.0;
    if (lts_path_terminal(l, &t) != LTS_STATUS_OK || t < 0.0) return 4;
    LtsPath *bad = NULL;
    if (lts_skew_path(0.7, 10, 1, 0, &bad) != LTS_STATUS_INVALID_ARGUMENT || bad != NULL) return 5;
    char msg[256];
    if (lts_last_error(msg, sizeof msg) == 0) return 6;
    lts_path_free(l);
    lts_path_free(b);
    printf("%s %.6f\n", lts_version(), t);
    return 0;
}
