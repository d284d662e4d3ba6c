"""Middleware tests"""
