/* Build: cc demo.c -I../include ../../../target/debug/libsqlreflect_ffi.a -lpthread -ldl -lm */
#include <stdio.h>
#include "sqlreflect.h"

static int check(SrStatus st) {
    if (st != SR_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)st, sr_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    char *json = NULL;
    if (check(sr_classify("CREATE INDEX i ON t (a, b)", &json))) return 1;
    printf("classify %s\n", json);
    sr_string_free(json);

    int pass = 0;
    char *reason = NULL;
    if (check(sr_check_syntax("SELECT a, FROM t", &pass, &reason))) return 1;
    printf("syntax %d %s\n", pass, reason ? reason : "");
    sr_string_free(reason);

    SrSession *s = NULL;
    if (check(sr_session_new("demo", 300.0, &s))) return 1;
    if (check(sr_session_submit(s, "CREATE TABLE t (a INT, b INT)", 0.0, &json))) return 1;
    sr_string_free(json);
    if (check(sr_session_submit(s, "ALTER TABLE t MODIFY a BIGINT", 5.0, &json))) return 1;
    printf("submit %s\n", json);
    sr_string_free(json);

    SrStatus st = sr_session_advance_task(s, 0, 6.0, &json);
    printf("bad task %d %s\n", (int)st, sr_last_error());
    sr_session_free(s);
    return 0;
}
