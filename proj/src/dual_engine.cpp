namespace dr {}
