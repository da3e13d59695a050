# Package marker for tests