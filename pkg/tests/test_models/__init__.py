"""Domain model tests"""
