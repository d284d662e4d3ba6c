"""Provider tests"""
