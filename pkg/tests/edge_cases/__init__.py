# Edge cases tests package 