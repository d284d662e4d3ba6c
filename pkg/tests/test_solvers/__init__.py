"""Solver tests"""
